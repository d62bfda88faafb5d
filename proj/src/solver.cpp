#include "collapselab/solver.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <memory>
#include <cmath>
#include <limits>
#include <numeric>

namespace collapselab {

std::vector<double> ModeBasis::lambda() const {
    std::vector<double> l(dim());
    for (std::size_t i = 0; i < dim(); ++i) l[i] = b[i] / s[i];
    return l;
}

SymMatrix ModeBasis::assemble(const std::vector<double>& g) const {
    const std::size_t n = dim();
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        if (g[k] == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double ui = g[k] * u(i, k);
            if (ui == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out(i, j) += ui * u(j, k);
        }
    }
    return SymMatrix(out);
}

bool commuting_instance(const LossSpec& spec, const CovarianceModel& cov) {
    if (!cov.commuting) return false;
    const SymMatrix b = hessian_b(spec, cov);
    return commutes(b, cov.a0, 1e-8) && commutes(b, cov.c, 1e-8);
}

namespace {

double quad_form(const Matrix& u, std::size_t k, const SymMatrix& m) {
    const std::size_t n = m.dim();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < n; ++j) r += m(i, j) * u(j, k);
        s += u(i, k) * r;
    }
    return s;
}

void require_pd_sigma(const SymMatrix& sigma) {
    const auto pair = eig_sym(sigma);
    if (pair.values.empty() || pair.values.back() <= 1e-10)
        throw SingularSigma("Sigma is not positive definite (smallest eigenvalue " +
                            std::to_string(pair.values.empty() ? 0.0 : pair.values.back()) + ")");
}

// Modes ranked for the global minimum: lambda descending, then b descending,
// then index ascending.
std::vector<std::size_t> rank_modes(const std::vector<double>& lambda, const std::vector<double>& b) {
    std::vector<std::size_t> order(lambda.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (lambda[i] != lambda[j]) return lambda[i] > lambda[j];
        if (b[i] != b[j]) return b[i] > b[j];
        return i < j;
    });
    return order;
}

// Common view of both routes: per-mode lambda, b, and how to turn a mask into
// W^T W.
struct Modes {
    std::vector<double> lambda;
    std::vector<double> b;
    std::vector<bool> admissible;
    std::function<SymMatrix(const Mask&)> build;
};

Modes commuting_modes(const LossSpec& spec, const CovarianceModel& cov) {
    auto basis = std::make_shared<ModeBasis>(mode_basis(spec, cov));
    Modes m;
    m.lambda = basis->lambda();
    m.b = basis->b;
    const double thr = collapse_threshold(hessian_b(spec, cov));
    m.admissible.resize(m.b.size());
    for (std::size_t i = 0; i < m.b.size(); ++i) m.admissible[i] = m.b[i] > thr;
    m.build = [basis](const Mask& mask) {
        std::vector<double> g(basis->dim(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (mask[i]) g[i] = 0.5 * basis->b[i] / (basis->s[i] * basis->s[i]);
        return basis->assemble(g);
    };
    return m;
}

Modes general_modes(const LossSpec& spec, const CovarianceModel& cov) {
    const SymMatrix b = hessian_b(spec, cov);
    const SymMatrix root_inv = mat_pow(cov.sigma, -0.5);
    auto pair = std::make_shared<SpectralPair>(eig_sym(congruence(root_inv.full(), b)));
    Modes m;
    m.lambda = pair->values;
    double scale = 0.0;
    for (double v : m.lambda) scale = std::max(scale, std::abs(v));
    m.b.resize(m.lambda.size());
    m.admissible.resize(m.lambda.size());
    for (std::size_t i = 0; i < m.lambda.size(); ++i) {
        m.b[i] = m.lambda[i];
        m.admissible[i] = m.lambda[i] > 1e-12 * scale;
    }
    m.build = [pair, root_inv](const Mask& mask) {
        return 0.5 * congruence(root_inv.full(), masked(*pair, mask));
    };
    return m;
}

StationaryPoint make_point(const Modes& modes, const Mask& mask, std::size_t d_star) {
    StationaryPoint p;
    p.mask = mask;
    p.wtw = modes.build(mask);
    p.rank = mask.popcount();
    double loss = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) loss -= 0.25 * modes.lambda[i] * modes.lambda[i];
    p.loss_value = loss;

    std::size_t m = 0;
    double scale = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (modes.admissible[i]) ++m;
        scale = std::max(scale, std::abs(modes.lambda[i]));
    }
    const double tol = 1e-12 * (1.0 + scale);
    bool top = p.rank == std::min(m, d_star);
    double min_sel = std::numeric_limits<double>::infinity();
    double max_unsel = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) min_sel = std::min(min_sel, modes.lambda[i]);
        else if (modes.admissible[i]) max_unsel = std::max(max_unsel, modes.lambda[i]);
    }
    if (min_sel + tol < max_unsel) top = false;
    p.is_local_min = top;
    return p;
}

Mask global_mask(const Modes& modes, std::size_t d_star) {
    const auto order = rank_modes(modes.lambda, modes.b);
    std::vector<bool> bits(modes.lambda.size(), false);
    std::size_t taken = 0;
    for (std::size_t idx : order) {
        if (taken == d_star) break;
        if (!modes.admissible[idx]) break;
        bits[idx] = true;
        ++taken;
    }
    return Mask(std::move(bits));
}

std::vector<StationaryPoint> enumerate(const Modes& modes, std::size_t d1) {
    const std::size_t n = modes.lambda.size();
    const std::size_t d_star = std::min(n, d1);
    std::vector<StationaryPoint> out;
    if (n <= 20) {
        std::uint64_t allowed = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (modes.admissible[i]) allowed |= (std::uint64_t{1} << i);
        for (std::uint64_t code = 0; code < (std::uint64_t{1} << n); ++code) {
            if ((code & ~allowed) != 0) continue;
            if (static_cast<std::size_t>(std::popcount(code)) > d_star) continue;
            out.push_back(make_point(modes, Mask::from_code(code, n), d_star));
        }
        return out;
    }
    const Mask g = global_mask(modes, d_star);
    std::vector<Mask> masks = {Mask::none(n), g};
    for (std::size_t i = 0; i < n; ++i) {
        if (!g[i]) continue;
        Mask m = g;
        m.bits[i] = false;
        masks.push_back(m);
    }
    std::sort(masks.begin(), masks.end(), [](const Mask& x, const Mask& y) {
        for (std::size_t i = x.size(); i-- > 0;)
            if (x[i] != y[i]) return y[i];
        return false;
    });
    masks.erase(std::unique(masks.begin(), masks.end()), masks.end());
    for (const auto& m : masks) out.push_back(make_point(modes, m, d_star));
    return out;
}

} // namespace

double collapse_threshold(const SymMatrix& b) { return 1e-12 * b.frobenius(); }

ModeBasis mode_basis(const LossSpec& spec, const CovarianceModel& cov) {
    const SymMatrix b = hessian_b(spec, cov);
    if (!commuting_instance(spec, cov)) throw InvalidArgument("mode_basis: A0, C and B do not commute");
    const std::size_t n = cov.dim();
    ModeBasis basis;
    if (cov.a0.is_diagonal() && cov.c.is_diagonal() && b.is_diagonal()) {
        basis.u = Matrix::identity(n);
    } else {
        const std::vector<SymMatrix> ms = {cov.a0, cov.c, b};
        basis.u = joint_eigenbasis(ms);
    }
    basis.a.resize(n);
    basis.c.resize(n);
    basis.b.resize(n);
    basis.s.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        basis.a[k] = quad_form(basis.u, k, cov.a0);
        basis.c[k] = quad_form(basis.u, k, cov.c);
        basis.b[k] = quad_form(basis.u, k, b);
        basis.s[k] = basis.a[k] + basis.c[k];
    }
    return basis;
}

std::vector<StationaryPoint> stationary_points(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1) {
    require_pd_sigma(cov.sigma);
    if (commuting_instance(spec, cov)) return enumerate(commuting_modes(spec, cov), d1);
    return enumerate(general_modes(spec, cov), d1);
}

std::vector<StationaryPoint> stationary_points_general(const LossSpec& spec, const CovarianceModel& cov,
                                                       std::size_t d1) {
    require_pd_sigma(cov.sigma);
    return enumerate(general_modes(spec, cov), d1);
}

StationaryPoint global_minimum(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1) {
    require_pd_sigma(cov.sigma);
    const Modes modes = commuting_instance(spec, cov) ? commuting_modes(spec, cov) : general_modes(spec, cov);
    const std::size_t d_star = std::min(modes.lambda.size(), d1);
    return make_point(modes, global_mask(modes, d_star), d_star);
}

Matrix lift(const SymMatrix& wtw, std::size_t d1) {
    const auto pair = eig_sym(wtw);
    const std::size_t n = pair.dim();
    double scale = 0.0;
    for (double v : pair.values) scale = std::max(scale, std::abs(v));
    for (std::size_t k = d1; k < n; ++k)
        if (pair.values[k] > 1e-10 * (1.0 + scale)) throw DimensionError("lift: rank of W^T W exceeds d1");
    Matrix w(d1, n);
    for (std::size_t k = 0; k < std::min(d1, n); ++k) {
        // Round-off eigenvalues would otherwise leave 1e-8-sized rows in W.
        const double v = pair.values[k];
        const double r = v > 1e-12 * scale ? std::sqrt(v) : 0.0;
        for (std::size_t j = 0; j < n; ++j) w(k, j) = r * pair.vectors(j, k);
    }
    return w;
}

// --- Collapse prediction -------------------------------------------------------

std::size_t CollapseReport::collapsed_count() const {
    return static_cast<std::size_t>(
        std::count_if(modes.begin(), modes.end(), [](const ModeVerdict& v) { return v.collapses; }));
}

CollapseReport predict_collapse(const LossSpec& spec, const CovarianceModel& cov) {
    const SymMatrix b = hessian_b(spec, cov);
    const double thr = collapse_threshold(b);
    const bool infonce_type = spec.is_contrastive_sample_family();
    CollapseReport rep;
    rep.commuting = commuting_instance(spec, cov);
    if (rep.commuting) {
        const ModeBasis basis = mode_basis(spec, cov);
        for (std::size_t i = 0; i < basis.dim(); ++i) {
            ModeVerdict v;
            v.mode = i;
            v.a = basis.a[i];
            v.c = basis.c[i];
            v.b = basis.b[i];
            v.collapses = v.b <= thr;
            v.lhs = infonce_type ? v.a - v.b : 0.0;
            v.rhs = infonce_type ? v.a : v.b;
            v.threshold_quantity = v.b;
            rep.modes.push_back(v);
        }
    } else {
        const auto pair = eig_sym(b);
        for (std::size_t i = 0; i < pair.dim(); ++i) {
            ModeVerdict v;
            v.mode = i;
            v.a = std::numeric_limits<double>::quiet_NaN();
            v.c = std::numeric_limits<double>::quiet_NaN();
            v.b = pair.values[i];
            v.collapses = v.b <= thr;
            v.lhs = 0.0;
            v.rhs = v.b;
            v.threshold_quantity = v.b;
            rep.modes.push_back(v);
        }
    }
    const std::size_t k = rep.collapsed_count();
    rep.complete_collapse = !rep.modes.empty() && k == rep.modes.size();
    rep.dimensional_collapse = k > 0 && k < rep.modes.size();
    return rep;
}

// --- Normalization ---------------------------------------------------------------

namespace {

double target_of(const LossSpec& spec) {
    if (!spec.normalization) throw InvalidArgument("normalized solution needs a normalization block");
    return spec.normalization->target;
}

NormalizedSolution limit_from_basis(const ModeBasis& basis, double c, const Mask& mask) {
    const std::size_t n = basis.dim();
    if (mask.size() != n) throw DimensionError("normalized_limit: mask length differs from dimension");
    const std::size_t dm = mask.popcount();
    if (dm == 0) throw EmptyMask("normalized_limit: mask selects no mode");
    const auto lambda = basis.lambda();
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) t += lambda[i];
    const double shift = (2.0 * c - t) / static_cast<double>(dm);
    std::vector<double> g(n, 0.0);
    NormalizedSolution sol;
    sol.mask = mask;
    sol.d_m = dm;
    sol.feasible = true;
    double rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const double bracket = lambda[i] + shift;
        if (!(bracket > 0.0)) sol.feasible = false;
        g[i] = 0.5 * bracket / basis.s[i];
        rho += basis.s[i] * g[i];
    }
    sol.wtw = basis.assemble(g);
    sol.rho = rho;
    return sol;
}

std::size_t d_star_of(std::size_t n, std::size_t d1) { return std::min(n, d1); }

} // namespace

NormalizedSolution normalized_limit(const LossSpec& spec, const CovarianceModel& cov, const Mask& mask) {
    return limit_from_basis(mode_basis(spec, cov), target_of(spec), mask);
}

std::vector<double> normalized_margins(const LossSpec& spec, const CovarianceModel& cov, const Mask& mask) {
    const ModeBasis basis = mode_basis(spec, cov);
    const double c = target_of(spec);
    const auto lambda = basis.lambda();
    const std::size_t dm = mask.popcount();
    if (dm == 0) throw EmptyMask("normalized_margins: mask selects no mode");
    double t = 0.0;
    for (std::size_t i = 0; i < lambda.size(); ++i)
        if (mask[i]) t += lambda[i];
    std::vector<double> out(lambda.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < lambda.size(); ++i)
        if (mask[i]) out[i] = lambda[i] + 2.0 * c / static_cast<double>(dm) - t / static_cast<double>(dm);
    return out;
}

NormalizedSolution normalized_global_limit(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1) {
    const ModeBasis basis = mode_basis(spec, cov);
    const double c = target_of(spec);
    const auto lambda = basis.lambda();
    const auto order = rank_modes(lambda, basis.b);
    const std::size_t n = basis.dim();
    const std::size_t d_star = d_star_of(n, d1);
    if (d_star == 0) throw EmptyMask("normalized_global_limit: d1 is zero");
    NormalizedSolution best;
    std::vector<bool> bits(n, false);
    for (std::size_t k = 0; k < d_star; ++k) {
        bits[order[k]] = true;
        NormalizedSolution sol = limit_from_basis(basis, c, Mask(bits));
        if (!sol.feasible) break;
        best = std::move(sol);
    }
    return best;
}

NormalizedSolution normalized_solution_for_mask(const LossSpec& spec, const CovarianceModel& cov, const Mask& mask) {
    const double c = target_of(spec);
    const double kappa = spec.normalization->kappa;
    if (!std::isfinite(kappa)) throw UnsupportedInfiniteKappa("finite-kappa solver called with kappa = inf");
    const ModeBasis basis = mode_basis(spec, cov);
    const std::size_t n = basis.dim();
    if (mask.size() != n) throw DimensionError("normalized solution: mask length differs from dimension");
    const auto lambda = basis.lambda();
    const std::size_t dm = mask.popcount();
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i]) t += lambda[i];
    const double gap = (c - 0.5 * t) / (1.0 + kappa * static_cast<double>(dm));  // c - rho
    std::vector<double> g(n, 0.0);
    double rho = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        g[i] = 0.5 * (lambda[i] + 2.0 * kappa * gap) / basis.s[i];
        rho += basis.s[i] * g[i];
    }
    NormalizedSolution sol;
    sol.mask = mask;
    sol.d_m = dm;
    sol.rho = rho;
    sol.wtw = basis.assemble(g);
    sol.feasible = true;
    return sol;
}

std::vector<NormalizedSolution> normalized_solution_finite_kappa(const LossSpec& spec, const CovarianceModel& cov,
                                                                 std::size_t d1) {
    const double c = target_of(spec);
    const double kappa = spec.normalization->kappa;
    if (!std::isfinite(kappa)) throw UnsupportedInfiniteKappa("finite-kappa solver called with kappa = inf");
    const ModeBasis basis = mode_basis(spec, cov);
    const std::size_t n = basis.dim();
    const std::size_t d_star = d_star_of(n, d1);
    const auto lambda = basis.lambda();
    double scale = 0.0;
    for (double v : lambda) scale = std::max(scale, std::abs(v));
    const double thr = 1e-12 * (1.0 + scale);

    auto consistent = [&](const Mask& mask) {
        const std::size_t dm = mask.popcount();
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i]) t += lambda[i];
        const double gap = (c - 0.5 * t) / (1.0 + kappa * static_cast<double>(dm));
        for (std::size_t i = 0; i < n; ++i) {
            const double shifted = lambda[i] + 2.0 * kappa * gap;
            if (mask[i] && !(shifted > thr)) return false;
            if (!mask[i] && shifted > thr && dm < d_star) return false;
        }
        return true;
    };

    std::vector<Mask> candidates;
    if (n <= 20) {
        for (std::uint64_t code = 0; code < (std::uint64_t{1} << n); ++code)
            if (static_cast<std::size_t>(std::popcount(code)) <= d_star) candidates.push_back(Mask::from_code(code, n));
    } else {
        const auto order = rank_modes(lambda, basis.b);
        std::vector<bool> bits(n, false);
        candidates.push_back(Mask(bits));
        for (std::size_t k = 0; k < d_star; ++k) {
            bits[order[k]] = true;
            candidates.push_back(Mask(bits));
        }
    }

    std::vector<NormalizedSolution> out;
    for (const auto& mask : candidates)
        if (consistent(mask)) out.push_back(normalized_solution_for_mask(spec, cov, mask));
    if (out.empty()) {
        NormalizedSolution origin = normalized_solution_for_mask(spec, cov, Mask::none(n));
        origin.feasible = false;
        out.push_back(std::move(origin));
    }
    return out;
}

// --- Bias ---------------------------------------------------------------------------

BiasReport bias_constrained_solutions(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1) {
    const double c = target_of(spec);
    LossSpec plain = spec;
    plain.normalization.reset();
    plain.bias_enabled = false;
    BiasReport rep;
    for (auto& p : stationary_points(plain, cov, d1)) {
        const double rho = trace_product(p.wtw, cov.sigma);
        if (rho > c * (1.0 + 1e-12)) continue;
        rep.max_d_m = std::max(rep.max_d_m, p.rank);
        rep.solutions.push_back(BiasSolution{std::move(p), rho, std::max(0.0, c - rho)});
    }

    std::vector<double> lambda;
    if (commuting_instance(plain, cov)) {
        lambda = mode_basis(plain, cov).lambda();
    } else {
        lambda = eig_sym(congruence(mat_pow(cov.sigma, -0.5).full(), hessian_b(plain, cov))).values;
    }
    rep.complete_collapse_possible = std::all_of(lambda.begin(), lambda.end(), [&](double l) { return c < l; });
    rep.single_mode_infeasible =
        std::all_of(lambda.begin(), lambda.end(), [&](double l) { return !(l > 0.0) || 0.5 * l > c; });
    return rep;
}

// --- Case analysis -------------------------------------------------------------------

namespace {

std::vector<double> full_mask_margins(const std::vector<double>& a, const std::vector<double>& cv, double c) {
    const std::size_t d = a.size();
    std::vector<double> lambda(d);
    double t = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        lambda[i] = (a[i] - cv[i]) / (a[i] + cv[i]);
        t += lambda[i];
    }
    std::vector<double> m(d);
    for (std::size_t i = 0; i < d; ++i) m[i] = lambda[i] + 2.0 * c / static_cast<double>(d) - t / static_cast<double>(d);
    return m;
}

CaseResult run_case(std::string name, std::vector<double> a, std::vector<double> cv, double c,
                    std::vector<bool> predicted) {
    CaseResult r;
    r.name = std::move(name);
    r.margins = full_mask_margins(a, cv, c);
    r.a = std::move(a);
    r.c = std::move(cv);
    r.predicted_collapse = std::move(predicted);
    r.evaluated_collapse.resize(r.margins.size());
    for (std::size_t i = 0; i < r.margins.size(); ++i) r.evaluated_collapse[i] = !(r.margins[i] > 0.0);
    r.pass = r.evaluated_collapse == r.predicted_collapse;
    return r;
}

} // namespace

AppendixCReport appendix_c_cases(const CovarianceModel& cov, double c, double eps) {
    LossSpec spec = LossSpec::beta_infonce(0.0);
    if (!commuting_instance(spec, cov)) throw InvalidArgument("appendix_c_cases: covariances do not commute");
    const ModeBasis basis = mode_basis(spec, cov);
    const std::size_t d = basis.dim();
    if (d < 2) throw DimensionError("appendix_c_cases: needs at least two modes");
    for (double a : basis.a)
        if (!(a > 0.0)) throw InvalidCovariance("appendix_c_cases: A0 must be positive definite");

    AppendixCReport rep;
    const auto given = full_mask_margins(basis.a, basis.c, c);
    for (double m : given) rep.given_collapse.push_back(!(m > 0.0));

    std::vector<double> small(d);
    for (std::size_t i = 0; i < d; ++i) small[i] = 1e-6 * basis.a[i];
    rep.small_augmentation = run_case("small_augmentation", basis.a, small, c, std::vector<bool>(d, false));

    // Strongest augmentation on the last mode only.
    std::vector<double> strong(d, 0.0);
    strong[d - 1] = 1e4 * basis.a[d - 1];
    std::vector<bool> strong_pred(d, false);
    strong_pred[d - 1] = true;
    rep.strong_single_mode = run_case("strong_single_mode", basis.a, strong, c, strong_pred);

    // a_1 - c_1 = eps on the first mode, nothing elsewhere. With
    // lambda_1 = eps / (2 a_1 - eps), the full-mask condition fails iff
    // lambda_1 <= (d - 1 - 2c) / (d - 1).
    const double a1 = basis.a[0];
    if (!(eps > 0.0 && eps < a1)) throw InvalidArgument("appendix_c_cases: eps must lie in (0, a_1)");
    std::vector<double> weak(d, 0.0);
    weak[0] = a1 - eps;
    const double dd = static_cast<double>(d);
    const double r = (dd - 1.0 - 2.0 * c) / (dd - 1.0);
    rep.eps = eps;
    rep.exact_eps_threshold = 2.0 * a1 * r / (1.0 + r);
    const double apc = 2.0 * a1 - eps;
    rep.printed_eps_threshold = apc * (dd - 3.0) / (apc + dd);
    std::vector<bool> weak_pred(d, false);
    weak_pred[0] = eps <= rep.exact_eps_threshold;
    rep.weak_single_mode = run_case("weak_single_mode", basis.a, weak, c, weak_pred);
    rep.printed_inequality_agrees = (eps < rep.printed_eps_threshold) == rep.weak_single_mode.evaluated_collapse[0];
    return rep;
}

} // namespace collapselab
