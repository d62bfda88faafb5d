#pragma once

// Philox4x32-10 counter-based generator. A (seed, stream) pair fixes the
// whole output sequence, so independent substreams can be evaluated in any
// order and still give the same numbers.

#include <array>
#include <cstdint>

namespace collapselab {

class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    /// Standard normal via Box-Muller.
    double normal() noexcept;

    /// Independent generator keyed by the same seed and a derived stream id.
    Philox substream(std::uint64_t id) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint32_t, 4> block_{};
    int used_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

} // namespace collapselab
