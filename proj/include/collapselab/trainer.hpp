#pragma once

// Full-batch first-order training on the closed-form landscape or on the
// sample loss, with spectrum tracking and comparison against the solver.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <variant>
#include <vector>

#include "collapselab/datamodel.hpp"
#include "collapselab/losses.hpp"
#include "collapselab/solver.hpp"

namespace collapselab {

struct TrainConfig {
    enum class Optimizer { gradient_descent, adam };

    Optimizer optimizer = Optimizer::adam;
    double lr = 6e-4;
    /// Plain gradient descent on the closed-form landscape only: replace lr
    /// by 0.9 * stable_lr for the instance being trained.
    bool auto_lr = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t max_iters = 5000;
    double grad_tol = 1e-9;
    std::uint64_t seed = 0;
    double init_scale = 0.1;
    std::size_t record_every = 100;
    /// Optional direction u in input space. When set, convergence also needs
    /// |change of u^T W^T W u| < watch_tol over one iteration.
    std::vector<double> watch;
    double watch_tol = 1e-9;

    void validate() const;
};

struct ClosedFormSource {
    CovarianceModel cov;
};

/// Training on the sample loss over a fixed set of augmentation draws.
struct SampleSource {
    Dataset ds;
    AugmentationSpec aug;
    std::size_t mc_draws = 1;
    std::uint64_t draw_seed = 0;
};

using TrainSource = std::variant<ClosedFormSource, SampleSource>;

struct Checkpoint {
    std::size_t iter = 0;
    double loss = 0.0;
    double grad_norm = 0.0;    // max-norm
    std::vector<double> eigs;  // W^T W, descending
};

struct TrajectoryRecord {
    std::vector<Checkpoint> checkpoints;
    Weights final_weights;
    bool converged = false;
    std::optional<std::size_t> iters_to_converge;
};

class Diverged : public Error {
public:
    Diverged(const std::string& what, Checkpoint last, TrajectoryRecord partial)
        : Error(what), last_(std::move(last)), partial_(std::move(partial)) {}
    const Checkpoint& last() const noexcept { return last_; }
    const TrajectoryRecord& partial() const noexcept { return partial_; }

private:
    Checkpoint last_;
    TrajectoryRecord partial_;
};

/// W starts with i.i.d. N(0, (init_scale / sqrt(d0))^2) entries.
TrajectoryRecord train(const LossSpec& spec, const TrainSource& source, std::size_t d1, const TrainConfig& config);

/// Columns iter,loss,grad_norm,eig_0..eig_{d-1}.
void write_trajectory_csv(const TrajectoryRecord& rec, std::ostream& out);

/// Largest step that keeps plain gradient descent stable on the closed-form
/// landscape, estimated from the curvature at the origin and at the minimum.
double stable_lr(const LossSpec& spec, const CovarianceModel& cov);

struct ModeError {
    double trained = 0.0;
    double theory = 0.0;
    double abs_error = 0.0;
    double rel_error = 0.0;
    bool surviving = false;
};

struct VerificationReport {
    std::vector<ModeError> modes;
    double max_rel_error = 0.0;  // over surviving modes
    double max_abs_error_collapsed = 0.0;
    std::size_t trained_surviving = 0;
    std::size_t predicted_surviving = 0;
    bool verdicts_match = false;
    bool pass = false;
};

/// Throws NotConverged when the record did not converge.
VerificationReport verify_against_theory(const TrajectoryRecord& rec, const LossSpec& spec,
                                         const CovarianceModel& cov, double tol);

struct ConvergencePoint {
    double t = 0.0;
    std::optional<std::size_t> iters;  // none when max_iters was reached
    double watched_eig = 0.0;
};

/// For each t trains the closed-form landscape of (spec(t), cov(t)) and
/// records the first iteration at which both the gradient and the watched
/// mode have settled (config.watch must be set).
std::vector<ConvergencePoint> convergence_time_sweep(const std::function<LossSpec(double)>& spec_of,
                                                     const std::function<CovarianceModel(double)>& cov_of,
                                                     const std::vector<double>& ts, std::size_t d1,
                                                     const TrainConfig& config);

} // namespace collapselab
