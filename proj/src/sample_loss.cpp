#include "collapselab/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "collapselab/parallel.hpp"
#include "collapselab/rng.hpp"

namespace collapselab {

namespace {

// e^{-u} - 1 for 0 <= u <= 0.5 by a truncated Taylor series. The degree is
// chosen per row so the truncation error stays below 1e-17 u; unlike expm1
// the loop is branch-free and cheap.
struct SmallExp {
    int degree = 18;
    std::array<double, 20> inv{};

    explicit SmallExp(double umax) {
        for (int k = 1; k < 20; ++k) inv[k] = 1.0 / k;
        double term = 1.0;
        for (int k = 1; k <= 18; ++k) {
            term *= umax / (k + 1);
            if (term <= 1e-17) {
                degree = k;
                break;
            }
        }
    }

    double operator()(double u) const {
        double acc = 1.0;
        for (int k = degree; k >= 2; --k) acc = 1.0 - u * inv[k] * acc;
        return -u * acc;
    }
};

constexpr double kSmallU = 0.5;

// Sums over j of e^{-u_j} - 1, u_j and u_j^2 in blocks of eight lanes, so
// the Taylor recursion runs on independent lanes instead of one long chain.
struct RowSums {
    double em1 = 0.0;
    double u1 = 0.0;
    double u2 = 0.0;
};

RowSums small_row_sums(const std::vector<double>& u, const SmallExp& em1) {
    constexpr std::size_t kLanes = 8;
    const std::size_t n = u.size();
    double s[kLanes] = {}, a[kLanes] = {}, b[kLanes] = {};
    std::size_t j = 0;
    for (; j + kLanes <= n; j += kLanes) {
        double acc[kLanes];
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] = 1.0;
        for (int k = em1.degree; k >= 2; --k) {
            const double c = em1.inv[k];
            for (std::size_t l = 0; l < kLanes; ++l) acc[l] = 1.0 - u[j + l] * c * acc[l];
        }
        for (std::size_t l = 0; l < kLanes; ++l) {
            const double x = u[j + l];
            s[l] -= x * acc[l];
            a[l] += x;
            b[l] += x * x;
        }
    }
    RowSums r;
    for (; j < n; ++j) {
        r.em1 += em1(u[j]);
        r.u1 += u[j];
        r.u2 += u[j] * u[j];
    }
    for (std::size_t l = 0; l < kLanes; ++l) {
        r.em1 += s[l];
        r.u1 += a[l];
        r.u2 += b[l];
    }
    return r;
}



Matrix project(const Matrix& x, const Matrix& wt, const std::vector<double>& shift) {
    Matrix z = matmul(x, wt);
    if (!shift.empty()) {
        if (shift.size() != z.cols()) throw DimensionError("sample_loss: shift has wrong length");
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t k = 0; k < z.cols(); ++k) z(i, k) += shift[k];
    }
    return z;
}

// Second views stored column by column so the distance loop runs over j
// with unit stride.
struct Columns {
    std::size_t n = 0;
    std::vector<std::vector<double>> cols;

    explicit Columns(const Matrix& v) : n(v.rows()), cols(v.cols(), std::vector<double>(v.rows())) {
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < v.cols(); ++k) cols[k][j] = v(j, k);
    }
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// u_j = |z - v_j|^2 / 2 for every second view v_j; returns min and max of u.
Range half_sq_dists(std::span<const double> z, const Columns& v, std::vector<double>& u) {
    const std::size_t n = v.n;
    u.assign(n, 0.0);
    double* up = u.data();
    for (std::size_t k = 0; k < v.cols.size(); ++k) {
        const double zk = z[k];
        const double* col = v.cols[k].data();
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = zk - col[j];
            up[j] += diff * diff;
        }
    }
    constexpr std::size_t kLanes = 8;
    double lo[kLanes], hi[kLanes];
    for (std::size_t l = 0; l < kLanes; ++l) {
        lo[l] = INFINITY;
        hi[l] = -INFINITY;
    }
    std::size_t j = 0;
    for (; j + kLanes <= n; j += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) {
            const double x = 0.5 * up[j + l];
            up[j + l] = x;
            lo[l] = x < lo[l] ? x : lo[l];
            hi[l] = x > hi[l] ? x : hi[l];
        }
    Range r{INFINITY, -INFINITY};
    for (; j < n; ++j) {
        up[j] *= 0.5;
        r.lo = std::min(r.lo, up[j]);
        r.hi = std::max(r.hi, up[j]);
    }
    for (std::size_t l = 0; l < kLanes; ++l) {
        r.lo = std::min(r.lo, lo[l]);
        r.hi = std::max(r.hi, hi[l]);
    }
    return r;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_error_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Values per draw, or per contiguous block of anchors when there is one draw.
std::vector<double> error_units(const std::vector<std::vector<double>>& per_anchor) {
    std::vector<double> units;
    if (per_anchor.size() >= 2) {
        for (const auto& d : per_anchor) units.push_back(mean_of(d));
        return units;
    }
    const auto& a = per_anchor.front();
    const std::size_t blocks = std::min<std::size_t>(16, a.size());
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t lo = b * a.size() / blocks;
        const std::size_t hi = (b + 1) * a.size() / blocks;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += a[i];
        units.push_back(s / static_cast<double>(hi - lo));
    }
    return units;
}

} // namespace

DrawSet make_draws(const Dataset& ds, const AugmentationSpec& aug, std::size_t mc_draws, std::uint64_t seed) {
    if (mc_draws < 1) throw InvalidArgument("mc_draws must be >= 1");
    const std::size_t n = ds.n();
    const std::size_t d = ds.dim();
    const SymMatrix root = mat_pow(augmentation_cov(aug, d), 0.5);
    const Philox base(seed);
    DrawSet out;
    out.first.resize(mc_draws);
    out.second.resize(mc_draws);
    std::vector<double> xi(d);
    for (std::size_t k = 0; k < mc_draws; ++k) {
        Philox rng = base.substream(k);
        Matrix a(n, d);
        Matrix b(n, d);
        for (Matrix* m : {&a, &b}) {
            for (std::size_t i = 0; i < n; ++i) {
                for (double& v : xi) v = rng.normal();
                auto clean = ds.points.row(i);
                auto row = m->row(i);
                for (std::size_t r = 0; r < d; ++r) {
                    double s = clean[r];
                    for (std::size_t c = 0; c < d; ++c) s += root(r, c) * xi[c];
                    row[r] = s;
                }
            }
        }
        out.first[k] = std::move(a);
        out.second[k] = std::move(b);
    }
    return out;
}

SampleEstimate sample_loss_on(const LossSpec& spec, const DrawSet& draws, const Matrix& w, bool with_grad,
                              const std::vector<double>& shift) {
    if (!spec.is_contrastive_sample_family())
        throw InvalidArgument("sample_loss: family " + family_name(spec.family) + " has no sample form");
    spec.validate();
    if (draws.first.empty()) throw InvalidArgument("sample_loss: no draws");
    const std::size_t n = draws.first.front().rows();
    const std::size_t d0 = draws.first.front().cols();
    if (n < 2) throw NeedsNegatives("sample_loss: contrastive loss needs n >= 2");
    if (w.cols() != d0) throw DimensionError("sample_loss: W has wrong column count");
    const std::size_t d1 = w.rows();

    const double alpha = spec.positive_weight();
    const double beta = spec.entropy_weight();
    const double k_total = static_cast<double>(n - 1) + alpha;
    const double log_k = std::log(k_total);
    const Matrix wt = w.transpose();
    const std::size_t m = draws.first.size();

    std::vector<std::vector<double>> deltas(m, std::vector<double>(n));
    std::vector<Matrix> grads(with_grad ? m : 0);

    parallel_for(m, [&](std::size_t k) {
        const Matrix& x = draws.first[k];
        const Matrix& y = draws.second[k];
        const Matrix z = project(x, wt, shift);
        const Matrix v = project(y, wt, shift);
        const Columns vc(v);
        std::vector<double> u;
        std::vector<double> q(with_grad ? n : 0);
        Matrix g(with_grad ? d1 : 0, with_grad ? d0 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            const Range range = half_sq_dists(z.row(i), vc, u);
            const double umax = range.hi;
            const double umin = range.lo;
            double log_ratio;
            if (umax <= kSmallU) {
                const SmallExp em1(umax);
                double s = small_row_sums(u, em1).em1;
                s += (alpha - 1.0) * em1(u[i]);
                log_ratio = std::log1p(s / k_total);
            } else {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += std::exp(-(u[j] - umin));
                s += (alpha - 1.0) * std::exp(-(u[i] - umin));
                log_ratio = -umin + std::log(s) - log_k;
            }
            deltas[k][i] = u[i] + beta * log_ratio;

            if (with_grad) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    q[j] = (j == i ? alpha : 1.0) * std::exp(-(u[j] - umin));
                    s += q[j];
                }
                auto zi = z.row(i);
                auto xi = x.row(i);
                for (std::size_t j = 0; j < n; ++j) {
                    double coef = -beta * q[j] / s;
                    if (j == i) coef += 1.0;
                    if (coef == 0.0) continue;
                    auto vj = v.row(j);
                    auto yj = y.row(j);
                    for (std::size_t r = 0; r < d1; ++r) {
                        const double a = coef * (zi[r] - vj[r]);
                        auto gr = g.row(r);
                        for (std::size_t c = 0; c < d0; ++c) gr[c] += a * (xi[c] - yj[c]);
                    }
                }
            }
        }
        if (with_grad) grads[k] = std::move(g);
    });

    SampleEstimate est;
    const auto units = error_units(deltas);
    double total = 0.0;
    for (const auto& dk : deltas) total += mean_of(dk);
    est.delta = total / static_cast<double>(m);
    est.value = beta * log_k + est.delta;
    est.std_error = std_error_of(units);
    if (with_grad) {
        est.grad = Matrix(d1, d0);
        for (const auto& g : grads) est.grad += g;
        est.grad *= 1.0 / (static_cast<double>(m) * static_cast<double>(n));
    }
    return est;
}

SampleEstimate sample_loss(const LossSpec& spec, const Dataset& ds, const AugmentationSpec& aug, const Matrix& w,
                           std::size_t mc_draws, std::uint64_t seed, const std::vector<double>& shift) {
    if (ds.n() < 2) throw NeedsNegatives("sample_loss: contrastive loss needs n >= 2");
    return sample_loss_on(spec, make_draws(ds, aug, mc_draws, seed), w, false, shift);
}

SampleEstimate sample_loss_grad(const LossSpec& spec, const Dataset& ds, const AugmentationSpec& aug,
                                const Matrix& w, std::size_t mc_draws, std::uint64_t seed) {
    if (ds.n() < 2) throw NeedsNegatives("sample_loss: contrastive loss needs n >= 2");
    return sample_loss_on(spec, make_draws(ds, aug, mc_draws, seed), w, true);
}

VarianceEstimate variance_quartic(const Dataset& ds, const AugmentationSpec& aug, const Matrix& w,
                                  std::size_t mc_draws, std::uint64_t seed) {
    if (ds.n() < 2) throw NeedsNegatives("variance_quartic: needs n >= 2");
    if (w.cols() != ds.dim()) throw DimensionError("variance_quartic: W has wrong column count");
    const DrawSet draws = make_draws(ds, aug, mc_draws, seed);
    const std::size_t n = ds.n();
    const Matrix wt = w.transpose();
    const std::size_t m = draws.first.size();

    // Per anchor: sums of u and u^2 over its n - 1 independent partners.
    std::vector<std::vector<double>> s1(m, std::vector<double>(n));
    std::vector<std::vector<double>> s2(m, std::vector<double>(n));
    parallel_for(m, [&](std::size_t k) {
        const Matrix z = project(draws.first[k], wt, {});
        const Columns vc(project(draws.second[k], wt, {}));
        std::vector<double> u;
        for (std::size_t i = 0; i < n; ++i) {
            half_sq_dists(z.row(i), vc, u);
            double a = 0.0;
            double b = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                a += u[j];
                b += u[j] * u[j];
            }
            s1[k][i] = a;
            s2[k][i] = b;
        }
    });

    auto quartic_of = [&](std::size_t k, std::size_t lo, std::size_t hi) {
        double a = 0.0;
        double b = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            a += s1[k][i];
            b += s2[k][i];
        }
        const double cnt = static_cast<double>(hi - lo) * static_cast<double>(n - 1);
        const double mean = a / cnt;
        return 0.5 * std::max(0.0, b / cnt - mean * mean);
    };

    std::vector<double> units;
    if (m >= 2) {
        for (std::size_t k = 0; k < m; ++k) units.push_back(quartic_of(k, 0, n));
    } else {
        const std::size_t blocks = std::min<std::size_t>(16, n);
        for (std::size_t b = 0; b < blocks; ++b) units.push_back(quartic_of(0, b * n / blocks, (b + 1) * n / blocks));
    }
    VarianceEstimate est;
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) total += quartic_of(k, 0, n);
    est.value = total / static_cast<double>(m);
    est.std_error = std_error_of(units);
    return est;
}

ExpansionTerms expansion_terms(const LossSpec& spec, const DrawSet& draws, const Matrix& w) {
    if (!spec.is_contrastive_sample_family())
        throw InvalidArgument("expansion_terms: family " + family_name(spec.family) + " has no sample form");
    const std::size_t n = draws.first.front().rows();
    if (n < 2) throw NeedsNegatives("expansion_terms: needs n >= 2");
    const double alpha = spec.positive_weight();
    const double beta = spec.entropy_weight();
    const double k_total = static_cast<double>(n - 1) + alpha;
    const double log_k = std::log(k_total);
    const Matrix wt = w.transpose();
    const std::size_t m = draws.first.size();

    struct Acc {
        double delta = 0.0, quad = 0.0, quart = 0.0, pooled = 0.0;
    };
    std::vector<Acc> acc(m);
    parallel_for(m, [&](std::size_t k) {
        const Matrix z = project(draws.first[k], wt, {});
        const Columns vc(project(draws.second[k], wt, {}));
        std::vector<double> u;
        Acc a;
        double sum_e1 = 0.0;
        double sum_e2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Range range = half_sq_dists(z.row(i), vc, u);
            const double umax = range.hi;
            const double umin = range.lo;
            double e1 = 0.0;
            double e2 = 0.0;
            double s = 0.0;
            const bool small = umax <= kSmallU;
            if (small) {
                const SmallExp em1(umax);
                const RowSums r = small_row_sums(u, em1);
                e1 = r.u1;
                e2 = r.u2;
                s = r.em1 + (alpha - 1.0) * em1(u[i]);
            } else {
                for (std::size_t j = 0; j < n; ++j) {
                    e1 += u[j];
                    e2 += u[j] * u[j];
                    s += std::exp(-(u[j] - umin));
                }
                s += (alpha - 1.0) * std::exp(-(u[i] - umin));
            }
            e1 += (alpha - 1.0) * u[i];
            e2 += (alpha - 1.0) * u[i] * u[i];
            e1 /= k_total;
            e2 /= k_total;
            const double log_ratio = small ? std::log1p(s / k_total) : -umin + std::log(s) - log_k;
            a.delta += u[i] + beta * log_ratio;
            a.quad += u[i] - beta * e1;
            a.quart += 0.5 * beta * (e2 - e1 * e1);
            sum_e1 += e1;
            sum_e2 += e2;
        }
        const double dn = static_cast<double>(n);
        a.delta /= dn;
        a.quad /= dn;
        a.quart /= dn;
        const double mean = sum_e1 / dn;
        a.pooled = 0.5 * beta * (sum_e2 / dn - mean * mean);
        acc[k] = a;
    });

    ExpansionTerms t;
    for (const auto& a : acc) {
        t.delta += a.delta;
        t.quadratic += a.quad;
        t.quartic += a.quart;
        t.pooled_quartic += a.pooled;
    }
    const double dm = static_cast<double>(m);
    t.delta /= dm;
    t.quadratic /= dm;
    t.quartic /= dm;
    t.pooled_quartic /= dm;
    return t;
}

} // namespace collapselab
