#include "collapselab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "collapselab/parallel.hpp"
#include "collapselab/rng.hpp"

namespace collapselab {

std::string mode_name(SweepMode m) { return m == SweepMode::analytic ? "analytic" : "trained"; }

SweepMode parse_mode(const std::string& s) {
    if (s == "analytic") return SweepMode::analytic;
    if (s == "trained") return SweepMode::trained;
    throw InvalidArgument("unknown sweep mode '" + s + "'");
}

double ExperimentResult::summary_value(const std::string& name) const {
    for (const auto& [k, v] : summary)
        if (k == name) return v;
    throw InvalidArgument("no summary entry '" + name + "'");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTrainedCollapse = 1e-4;

std::vector<double> ascending(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
}

double get_or_nan(const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : kNaN; }

std::string idx_key(const std::string& stem, std::size_t i) { return stem + "_" + std::to_string(i); }

SymMatrix trained_wtw(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1, const TrainConfig& cfg) {
    const TrajectoryRecord rec = train(spec, ClosedFormSource{cov}, d1, cfg);
    return gram(rec.final_weights.w);
}

std::size_t count_below(const std::vector<double>& eigs, double rel) {
    double mx = 0.0;
    for (double v : eigs) mx = std::max(mx, v);
    return static_cast<std::size_t>(std::count_if(eigs.begin(), eigs.end(), [&](double v) { return v < rel * mx; }));
}

// Top-k eigenvectors of m as columns.
Matrix top_vectors(const SymMatrix& m, std::size_t k) {
    const auto pair = eig_sym(m);
    Matrix q(m.dim(), k);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < m.dim(); ++i) q(i, j) = pair.vectors(i, j);
    return q;
}

} // namespace

double largest_principal_angle(const Matrix& qa, const Matrix& qb) {
    if (qa.rows() != qb.rows()) throw DimensionError("principal angle: row counts differ");
    // (I - Qa Qa^T) Qb; its largest singular value is sin(theta_max).
    Matrix r = qb;
    const Matrix coeff = matmul(qa.transpose(), qb);
    r -= matmul(qa, coeff);
    const auto s = eig_sym(SymMatrix(matmul(r.transpose(), r))).values;
    const double top = s.empty() ? 0.0 : std::max(0.0, s.front());
    return std::asin(std::min(1.0, std::sqrt(top)));
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("loglog_slope needs two or more points");
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(std::abs(y[i]));
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(std::abs(y[i])) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

std::vector<double> mode_values(const ModeBasis& basis, const SymMatrix& wtw) {
    const std::size_t n = basis.dim();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double r = 0.0;
            for (std::size_t j = 0; j < n; ++j) r += wtw(i, j) * basis.u(j, k);
            s += basis.u(i, k) * r;
        }
        out[k] = s;
    }
    return out;
}

SymMatrix sampled_identity_cov(std::size_t d, std::size_t n, std::uint64_t seed) {
    return empirical_cov(sample_gaussian(d, n, SymMatrix::identity(d), seed));
}

// --- sigma_scaling -------------------------------------------------------------

ExperimentResult sigma_scaling(const SigmaScalingParams& p) {
    const std::size_t d = p.a0.dim();
    if (d == 0) throw InvalidArgument("sigma_scaling: empty A0");
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < 3; ++i) keys.push_back(idx_key("eig_small", i));
    for (std::size_t i = 0; i < 3; ++i) keys.push_back(idx_key("theory_small", i));
    keys.push_back("max_abs_diff");
    keys.push_back("min_eig");
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"sigma", p.sigmas, true}}, keys);
    const auto a = eig_sym(p.a0).values;

    struct Cell {
        std::vector<double> eigs, theory;
        bool failed = false;
    };
    std::vector<Cell> cells(p.sigmas.size());
    parallel_for(cells.size(), [&](std::size_t k) {
        const double s2 = p.sigmas[k] * p.sigmas[k];
        const CovarianceModel cov(p.a0, s2 * SymMatrix::identity(d));
        std::vector<double> th(d);
        for (std::size_t i = 0; i < d; ++i) th[i] = 0.5 * a[i] / ((a[i] + s2) * (a[i] + s2));
        cells[k].theory = ascending(th);
        try {
            const SymMatrix wtw = p.mode == SweepMode::analytic
                                      ? global_minimum(LossSpec::infonce(), cov, d).wtw
                                      : trained_wtw(LossSpec::infonce(), cov, d, p.train);
            cells[k].eigs = ascending(eig_sym(wtw).values);
        } catch (const Error&) {
            cells[k].failed = true;
        }
    });

    double overall_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        if (c.failed) {
            res.grid.mark_failed(k);
            continue;
        }
        double diff = 0.0;
        for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(c.eigs[i] - c.theory[i]));
        for (std::size_t i = 0; i < 3; ++i) {
            res.grid.set(k, idx_key("eig_small", i), get_or_nan(c.eigs, i));
            res.grid.set(k, idx_key("theory_small", i), get_or_nan(c.theory, i));
        }
        res.grid.set(k, "max_abs_diff", diff);
        res.grid.set(k, "min_eig", c.eigs.front());
        overall_min = std::min(overall_min, c.eigs.front());
    }

    // Slope over the top decade of sigma.
    const double smax = *std::max_element(p.sigmas.begin(), p.sigmas.end());
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < cells.size(); ++k)
        if (!cells[k].failed && p.sigmas[k] >= smax / 10.0 && p.sigmas[k] > 0.0 && cells[k].eigs.front() > 0.0) {
            xs.push_back(p.sigmas[k]);
            ys.push_back(cells[k].eigs.front());
        }
    res.summary.emplace_back("top_decade_slope", xs.size() >= 2 ? loglog_slope(xs, ys) : kNaN);
    res.summary.emplace_back("min_eig_overall", overall_min);
    res.plot = PlotHint{PlotHint::Kind::lines, {"eig_small_0", "eig_small_1", "eig_small_2"}, true, true,
                        "smallest eigenvalues of W^T W"};
    return res;
}

// --- critical_n_sweep ----------------------------------------------------------

namespace {

// N Gaussian points whose uncentered second moment is exactly diag(a).
Dataset matched_dataset(const std::vector<double>& a, std::size_t n, std::uint64_t seed) {
    const std::size_t d = a.size();
    Dataset raw = sample_gaussian(d, n, SymMatrix::identity(d), seed);
    const SymMatrix white = mat_pow(empirical_cov(raw), -0.5);
    Matrix x = matmul(raw.points, white.full());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i, j) *= std::sqrt(a[j]);
    return Dataset(std::move(x));
}

} // namespace

ExperimentResult critical_n_sweep(const CriticalNParams& p) {
    const std::size_t d = p.a.size();
    if (d == 0) throw InvalidArgument("critical_n_sweep: empty a");
    const std::vector<std::string> keys = {"b_min",          "predicted_collapsed", "eig_small_0", "eig_small_1",
                                           "eig_small_2",    "smallest_ratio",      "trained_collapsed"};
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"n", p.ns, false}}, keys);
    const double s2 = p.sigma * p.sigma;
    const CovarianceModel cov(SymMatrix::diagonal(p.a), s2 * SymMatrix::identity(d));

    struct Cell {
        double b_min = 0.0;
        std::size_t predicted = 0;
        std::vector<double> eigs;
        double trained_collapsed = kNaN;
        bool failed = false;
    };
    std::vector<Cell> cells(p.ns.size());
    parallel_for(cells.size(), [&](std::size_t k) {
        const auto n = static_cast<std::size_t>(std::llround(p.ns[k]));
        Cell& c = cells[k];
        try {
            const LossSpec spec = LossSpec::weighted(p.alpha, n);
            const auto rep = predict_collapse(spec, cov);
            c.predicted = rep.collapsed_count();
            c.b_min = std::numeric_limits<double>::infinity();
            for (const auto& v : rep.modes) c.b_min = std::min(c.b_min, v.b);
            if (p.mode == SweepMode::analytic) {
                c.eigs = ascending(eig_sym(global_minimum(spec, cov, d).wtw).values);
            } else {
                const Dataset ds = matched_dataset(p.a, n, mix_seed(p.seed ^ (0x9e37ULL + n)));
                const SampleSource src{ds, AugmentationSpec::make_isotropic(p.sigma), p.mc_draws,
                                       mix_seed(p.seed + 7 * n + 1)};
                const auto rec = train(spec, src, d, p.train);
                c.eigs = ascending(eig_sym(gram(rec.final_weights.w)).values);
                c.trained_collapsed = static_cast<double>(count_below(c.eigs, kTrainedCollapse));
            }
        } catch (const Error&) {
            c.failed = true;
        }
    });

    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        if (c.failed) {
            res.grid.mark_failed(k);
            continue;
        }
        res.grid.set(k, "b_min", c.b_min);
        res.grid.set(k, "predicted_collapsed", static_cast<double>(c.predicted));
        for (std::size_t i = 0; i < 3; ++i) res.grid.set(k, idx_key("eig_small", i), get_or_nan(c.eigs, i));
        res.grid.set(k, "smallest_ratio", c.eigs.front() / std::max(1e-300, c.eigs.back()));
        res.grid.set(k, "trained_collapsed", c.trained_collapsed);
    }

    // Sign change of b_min: b = a - (1 - alpha) c / N is zero at N* = (1 - alpha) c / a.
    const double a_min = *std::min_element(p.a.begin(), p.a.end());
    res.summary.emplace_back("n_star", (1.0 - p.alpha) * s2 / a_min);
    double lo = kNaN, hi = kNaN;
    for (std::size_t k = 1; k < cells.size(); ++k)
        if (!cells[k - 1].failed && !cells[k].failed && (cells[k - 1].predicted > 0) != (cells[k].predicted > 0)) {
            lo = p.ns[k - 1];
            hi = p.ns[k];
            break;
        }
    res.summary.emplace_back("flip_after_n", lo);
    res.summary.emplace_back("flip_before_n", hi);
    res.plot = PlotHint{PlotHint::Kind::lines, {"eig_small_0", "eig_small_1", "eig_small_2"}, true, true,
                        "smallest eigenvalues of W^T W against N"};
    return res;
}

// --- beta_collapse_sweep --------------------------------------------------------

ExperimentResult beta_collapse_sweep(const BetaSweepParams& p) {
    const std::size_t d = p.a.size();
    if (d == 0 || p.c.size() != d) throw DimensionError("beta_collapse_sweep: a and c must have the same length");
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < d; ++i) keys.push_back(idx_key("eig", i));
    for (std::size_t i = 0; i < d; ++i) keys.push_back(idx_key("predicted_collapse", i));
    for (std::size_t i = 0; i < d; ++i) keys.push_back(idx_key("trained_collapse", i));
    for (std::size_t i = 0; i < d; ++i) keys.push_back(idx_key("boundary_beta", i));
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"beta", p.betas, false}, Axis{"sigma", p.sigmas, false}}, keys);

    const std::size_t cells = res.grid.cell_count();
    struct Cell {
        std::vector<double> eig;
        std::vector<bool> predicted;
        std::vector<double> trained;
        bool failed = false;
    };
    std::vector<Cell> out(cells);
    parallel_for(cells, [&](std::size_t k) {
        const double beta = res.grid.coord(k, 0);
        const double sigma = res.grid.coord(k, 1);
        std::vector<double> cv(d);
        for (std::size_t i = 0; i < d; ++i) cv[i] = sigma * sigma * p.c[i];
        const CovarianceModel cov(SymMatrix::diagonal(p.a), SymMatrix::diagonal(cv));
        const LossSpec spec = LossSpec::beta_infonce(beta);
        try {
            const auto rep = predict_collapse(spec, cov);
            for (const auto& v : rep.modes) out[k].predicted.push_back(v.collapses);
            const ModeBasis basis = mode_basis(spec, cov);
            const SymMatrix wtw = p.mode == SweepMode::analytic ? global_minimum(spec, cov, d).wtw
                                                                : trained_wtw(spec, cov, d, p.train);
            out[k].eig = mode_values(basis, wtw);
            if (p.mode == SweepMode::trained) {
                const double mx = *std::max_element(out[k].eig.begin(), out[k].eig.end());
                for (double v : out[k].eig) out[k].trained.push_back(v < kTrainedCollapse * mx ? 1.0 : 0.0);
            }
        } catch (const Error&) {
            out[k].failed = true;
        }
    });

    for (std::size_t k = 0; k < cells; ++k) {
        if (out[k].failed) {
            res.grid.mark_failed(k);
            continue;
        }
        const double sigma = res.grid.coord(k, 1);
        for (std::size_t i = 0; i < d; ++i) {
            res.grid.set(k, idx_key("eig", i), out[k].eig[i]);
            res.grid.set(k, idx_key("predicted_collapse", i), out[k].predicted[i] ? 1.0 : 0.0);
            res.grid.set(k, idx_key("trained_collapse", i), get_or_nan(out[k].trained, i));
            const double ci = sigma * sigma * p.c[i];
            res.grid.set(k, idx_key("boundary_beta", i), ci > 0.0 ? 1.0 - p.a[i] / ci : kNaN);
        }
    }
    std::vector<std::string> plot_keys;
    for (std::size_t i = 0; i < d; ++i) plot_keys.push_back(idx_key("eig", i));
    res.plot = PlotHint{PlotHint::Kind::lines, plot_keys, false, false, "mode values of W^T W against beta"};
    return res;
}

// --- normalization_collapse ------------------------------------------------------

ExperimentResult normalization_collapse(const NormalizationParams& p) {
    const std::size_t d = p.a0.dim();
    if (d == 0) throw InvalidArgument("normalization_collapse: empty A0");
    const std::vector<std::string> keys = {"d_m",         "rho",         "eig_small_0",       "eig_small_1",
                                           "eig_small_2", "unnormalized_min_eig", "trained_small_0", "trained_small_1",
                                           "trained_small_2", "trained_collapsed"};
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"sigma", p.sigmas, false}}, keys);
    const LossSpec limit_spec = p.base.with_normalization(std::numeric_limits<double>::infinity(), p.target);

    struct Cell {
        NormalizedSolution sol;
        std::vector<double> eigs;
        double unnorm_min = kNaN;
        std::vector<double> trained;
        bool failed = false;
    };
    std::vector<Cell> cells(p.sigmas.size());
    parallel_for(cells.size(), [&](std::size_t k) {
        const double s2 = p.sigmas[k] * p.sigmas[k];
        const CovarianceModel cov(p.a0, s2 * SymMatrix::identity(d));
        Cell& c = cells[k];
        try {
            c.sol = normalized_global_limit(limit_spec, cov, d);
            c.eigs = ascending(eig_sym(c.sol.wtw).values);
            c.unnorm_min = ascending(eig_sym(global_minimum(p.base, cov, d).wtw).values).front();
            if (p.mode == SweepMode::trained) {
                const LossSpec fin = p.base.with_normalization(p.trained_kappa, p.target);
                c.trained = ascending(eig_sym(trained_wtw(fin, cov, d, p.train)).values);
            }
        } catch (const Error&) {
            c.failed = true;
        }
    });

    double first_collapse = kNaN;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const auto& c = cells[k];
        if (c.failed) {
            res.grid.mark_failed(k);
            continue;
        }
        res.grid.set(k, "d_m", static_cast<double>(c.sol.d_m));
        res.grid.set(k, "rho", c.sol.rho);
        for (std::size_t i = 0; i < 3; ++i) {
            res.grid.set(k, idx_key("eig_small", i), get_or_nan(c.eigs, i));
            res.grid.set(k, idx_key("trained_small", i), get_or_nan(c.trained, i));
        }
        res.grid.set(k, "unnormalized_min_eig", c.unnorm_min);
        res.grid.set(k, "trained_collapsed",
                     c.trained.empty() ? kNaN : static_cast<double>(count_below(c.trained, kTrainedCollapse)));
        if (std::isnan(first_collapse) && c.sol.d_m < d) first_collapse = p.sigmas[k];
    }

    // Full-mask margin of the smallest-a mode as a function of sigma^2.
    const auto a = eig_sym(p.a0).values;
    auto margin = [&](double s2) {
        const CovarianceModel cov(p.a0, s2 * SymMatrix::identity(d));
        const ModeBasis basis = mode_basis(limit_spec, cov);
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (basis.a[i] < basis.a[arg]) arg = i;
        return normalized_margins(limit_spec, cov, Mask::ones(d))[arg];
    };
    double collapse_s2 = kNaN;
    if (margin(0.0) > 0.0) {
        double lo = 0.0, hi = 1e-3;
        while (hi < 1e6 && margin(hi) > 0.0) hi *= 2.0;
        if (margin(hi) <= 0.0) {
            for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
                const double mid = 0.5 * (lo + hi);
                (margin(mid) > 0.0 ? lo : hi) = mid;
            }
            collapse_s2 = hi;
        }
    }
    res.summary.emplace_back("smallest_a", a.back());
    res.summary.emplace_back("smallest_mode_collapse_sigma2", collapse_s2);
    res.summary.emplace_back("first_collapse_sigma", first_collapse);
    res.plot = PlotHint{PlotHint::Kind::lines, {"eig_small_0", "eig_small_1", "eig_small_2"}, false, false,
                        "smallest eigenvalues, normalized limit"};
    return res;
}

// --- phase_diagram ---------------------------------------------------------------

std::string pattern_label(int code) {
    switch (code) {
    case 0: return "none";
    case 1: return "mode-1 only";
    case 2: return "mode-2 only";
    case 3: return "complete";
    default: return "unknown";
    }
}

ExperimentResult phase_diagram(const PhaseParams& p) {
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"sigma", p.sigmas, false}, Axis{"theta", p.thetas, false}}, {"b1", "b2", "pattern"},
                         {"label"});
    const LossSpec spec = LossSpec::beta_infonce(p.beta);
    for (std::size_t k = 0; k < res.grid.cell_count(); ++k) {
        const double sigma = res.grid.coord(k, 0);
        const double theta = res.grid.coord(k, 1);
        const auto aug = AugmentationSpec::make_structured(sigma, theta);
        const CovarianceModel cov(SymMatrix::diagonal({p.a1, p.a2}), augmentation_cov(aug, 2));
        const auto rep = predict_collapse(spec, cov);
        const int code = (rep.modes[0].collapses ? 1 : 0) + (rep.modes[1].collapses ? 2 : 0);
        res.grid.set(k, "b1", rep.modes[0].b);
        res.grid.set(k, "b2", rep.modes[1].b);
        res.grid.set(k, "pattern", code);
        res.grid.set_text(k, "label", pattern_label(code));
    }
    res.plot = PlotHint{PlotHint::Kind::heatmap, {"pattern"}, false, false, "collapse pattern"};
    return res;
}

// --- downstream_eval ---------------------------------------------------------------

std::vector<double> ridge_fit(const Matrix& z, const std::vector<double>& y, double ridge) {
    const std::size_t n = z.rows(), d = z.cols();
    if (y.size() != n || n == 0) throw DimensionError("ridge_fit: size mismatch");
    SymMatrix a(d);
    std::vector<double> rhs(d, 0.0);
    Matrix g(d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            rhs[j] += z(i, j) * y[i] / static_cast<double>(n);
            for (std::size_t l = 0; l < d; ++l) g(j, l) += z(i, j) * z(i, l) / static_cast<double>(n);
        }
    for (std::size_t j = 0; j < d; ++j) g(j, j) += ridge;
    const SymMatrix inv = mat_pow(SymMatrix(g), -1.0);
    std::vector<double> out(d, 0.0);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t l = 0; l < d; ++l) out[j] += inv(j, l) * rhs[l];
    return out;
}

namespace {

double test_mse(const Matrix& w, const Dataset& tr, const Dataset& te, const std::vector<double>& ytr,
                const std::vector<double>& yte, double ridge) {
    const Matrix ztr = matmul(tr.points, w.transpose());
    const Matrix zte = matmul(te.points, w.transpose());
    const auto g = ridge_fit(ztr, ytr, ridge);
    double mse = 0.0;
    for (std::size_t i = 0; i < zte.rows(); ++i) {
        double pred = 0.0;
        for (std::size_t j = 0; j < zte.cols(); ++j) pred += g[j] * zte(i, j);
        mse += (pred - yte[i]) * (pred - yte[i]);
    }
    return mse / static_cast<double>(zte.rows());
}

} // namespace

ExperimentResult downstream_eval(const DownstreamParams& p) {
    if (!(p.ridge > 0.0)) throw InvalidArgument("downstream ridge must be > 0");
    const SymMatrix a0 = SymMatrix::diagonal({p.a1, p.a2});
    const Dataset tr = sample_gaussian(2, p.n_train, a0, mix_seed(p.seed * 2 + 1));
    const Dataset te = sample_gaussian(2, p.n_test, a0, mix_seed(p.seed * 2 + 2));
    std::vector<double> ytr(tr.n()), yte(te.n());
    for (std::size_t i = 0; i < tr.n(); ++i) ytr[i] = p.target_coeff * tr.points(i, 0);
    for (std::size_t i = 0; i < te.n(); ++i) yte[i] = p.target_coeff * te.points(i, 0);
    const double mean_y = std::accumulate(yte.begin(), yte.end(), 0.0) / static_cast<double>(yte.size());
    double var_y = 0.0;
    for (double v : yte) var_y += (v - mean_y) * (v - mean_y);
    var_y /= static_cast<double>(yte.size());

    const LossSpec spec = LossSpec::beta_infonce(p.beta);
    auto model = [&](double sigma, double theta) {
        const CovarianceModel cov(a0, augmentation_cov(AugmentationSpec::make_structured(sigma, theta), 2));
        const SymMatrix wtw =
            p.mode == SweepMode::analytic ? global_minimum(spec, cov, 2).wtw : trained_wtw(spec, cov, 2, p.train);
        return std::make_pair(wtw, predict_collapse(spec, cov));
    };

    // Clean one-feature baseline: the content coordinate of the unaugmented model.
    const auto clean = model(0.0, 1.0).first;
    Matrix w1(1, 2);
    w1(0, 0) = std::sqrt(std::max(0.0, clean(0, 0)));
    const double baseline = test_mse(w1, tr, te, ytr, yte, p.ridge);

    ExperimentResult res;
    res.grid = SweepGrid({Axis{"sigma", p.sigmas, false}, Axis{"theta", p.thetas, false}},
                         {"test_mse", "var_y", "baseline_mse", "pattern", "eig_0", "eig_1"});
    std::vector<std::array<double, 4>> out(res.grid.cell_count());
    std::vector<bool> failed(out.size(), false);
    parallel_for(out.size(), [&](std::size_t k) {
        try {
            const auto [wtw, rep] = model(res.grid.coord(k, 0), res.grid.coord(k, 1));
            const Matrix w = lift(wtw, 2);
            const auto e = eig_sym(wtw).values;
            const int code = (rep.modes[0].collapses ? 1 : 0) + (rep.modes[1].collapses ? 2 : 0);
            out[k] = {test_mse(w, tr, te, ytr, yte, p.ridge), static_cast<double>(code), e[0], e[1]};
        } catch (const Error&) {
            failed[k] = true;
        }
    });
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (failed[k]) {
            res.grid.mark_failed(k);
            continue;
        }
        res.grid.set(k, "test_mse", out[k][0]);
        res.grid.set(k, "var_y", var_y);
        res.grid.set(k, "baseline_mse", baseline);
        res.grid.set(k, "pattern", out[k][1]);
        res.grid.set(k, "eig_0", out[k][2]);
        res.grid.set(k, "eig_1", out[k][3]);
    }
    res.summary.emplace_back("var_y", var_y);
    res.summary.emplace_back("baseline_mse", baseline);
    res.plot = PlotHint{PlotHint::Kind::heatmap, {"test_mse"}, false, false, "downstream test MSE"};
    return res;
}

// --- imbalance_robustness ------------------------------------------------------------

ExperimentResult imbalance_robustness(const ImbalanceParams& p) {
    const std::size_t d = p.c.size();
    for (const auto& m : p.means)
        if (m.size() != d) throw DimensionError("imbalance: class means must match the augmentation dimension");
    auto a0_at = [&](double prop) {
        ImbalanceSpec s;
        s.proportions = {prop, 1.0 - prop};
        s.class_means = p.means;
        s.class_covs = {p.class_var * SymMatrix::identity(d), p.class_var * SymMatrix::identity(d)};
        return imbalanced_cov(s);
    };
    const SymMatrix c = SymMatrix::diagonal(p.c);
    const std::array<LossSpec, 2> specs = {LossSpec::infonce(), LossSpec::spectral_contrastive()};
    const std::array<std::string, 2> names = {"infonce", "scl"};

    struct Ref {
        std::size_t k = 0;
        Matrix q, q_raw;
    };
    std::array<Ref, 2> ref;
    auto subspaces = [&](const LossSpec& spec, double prop, std::size_t k) {
        const CovarianceModel cov(a0_at(prop), c);
        const auto gm = global_minimum(spec, cov, d);
        return std::make_pair(top_vectors(congruence(cov.sigma.full(), gm.wtw), k), top_vectors(gm.wtw, k));
    };
    for (std::size_t f = 0; f < 2; ++f) {
        const CovarianceModel cov(a0_at(0.5), c);
        const auto b = eig_sym(hessian_b(specs[f], cov)).values;
        ref[f].k = static_cast<std::size_t>(std::count_if(b.begin(), b.end(), [&](double v) { return v > 0.5 * b.front(); }));
        std::tie(ref[f].q, ref[f].q_raw) = subspaces(specs[f], 0.5, ref[f].k);
    }

    std::vector<std::string> keys;
    for (const auto& n : names) {
        keys.push_back("angle_" + n);
        keys.push_back("raw_angle_" + n);
        keys.push_back("k_" + n);
    }
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"proportion", p.proportions, false}}, keys);
    for (std::size_t cell = 0; cell < res.grid.cell_count(); ++cell) {
        const double prop = res.grid.coord(cell, 0);
        for (std::size_t f = 0; f < 2; ++f) {
            const auto [q, q_raw] = subspaces(specs[f], prop, ref[f].k);
            res.grid.set(cell, "angle_" + names[f], largest_principal_angle(ref[f].q, q));
            res.grid.set(cell, "raw_angle_" + names[f], largest_principal_angle(ref[f].q_raw, q_raw));
            res.grid.set(cell, "k_" + names[f], static_cast<double>(ref[f].k));
        }
    }
    res.plot = PlotHint{PlotHint::Kind::lines, {"angle_infonce", "angle_scl"}, false, false,
                        "subspace angle against class proportion"};
    return res;
}

// --- landscape_slice -------------------------------------------------------------------

std::string origin_label(int code) {
    switch (code) {
    case 0: return "local max";
    case 1: return "saddle";
    case 2: return "local min";
    default: return "undetermined";
    }
}

ExperimentResult landscape_slice(const SliceParams& p) {
    const ModeBasis basis = mode_basis(p.spec, p.cov);
    const std::size_t n = basis.dim();
    const std::size_t d1 = p.d1 == 0 ? n : p.d1;
    const auto lambda = basis.lambda();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return lambda[i] > lambda[j]; });
    const std::size_t used = std::min(n, d1);
    const std::size_t half = (used + 1) / 2;
    const bool two_d = p.two_d && used >= 2;

    if (std::find(p.values.begin(), p.values.end(), 0.0) == p.values.end())
        throw InvalidArgument("landscape_slice: the scale grid must contain 0");

    auto weights = [&](double r1, double r2) {
        Matrix w(d1, n);
        for (std::size_t row = 0; row < used; ++row) {
            const std::size_t m = order[row];
            const double r = (!two_d || row < half) ? r1 : r2;
            const double mag = std::sqrt(0.5 * std::abs(basis.b[m])) / basis.s[m];
            for (std::size_t j = 0; j < n; ++j) w(row, j) = r * mag * basis.u(j, m);
        }
        return w;
    };

    ExperimentResult res;
    if (two_d)
        res.grid = SweepGrid({Axis{"r1", p.values, false}, Axis{"r2", p.values, false}}, {"loss"});
    else
        res.grid = SweepGrid({Axis{"a", p.values, false}}, {"loss"});
    std::vector<double> loss(res.grid.cell_count());
    parallel_for(loss.size(), [&](std::size_t k) {
        const double r1 = res.grid.coord(k, 0);
        const double r2 = two_d ? res.grid.coord(k, 1) : r1;
        loss[k] = effective_loss(p.spec, p.cov, weights(r1, r2));
    });
    for (std::size_t k = 0; k < loss.size(); ++k) res.grid.set(k, "loss", loss[k]);

    // Second differences at the origin from the nearest grid neighbours.
    const auto& v = p.values;
    const std::size_t z = static_cast<std::size_t>(std::find(v.begin(), v.end(), 0.0) - v.begin());
    if (z == 0 || z + 1 >= v.size()) throw InvalidArgument("landscape_slice: 0 must be an interior grid value");
    auto second = [&](std::size_t axis) {
        auto at = [&](std::size_t i) {
            if (!two_d) return loss[i];
            std::vector<std::size_t> idx = {z, z};
            idx[axis] = i;
            return loss[res.grid.cell(idx)];
        };
        const double hm = v[z] - v[z - 1], hp = v[z + 1] - v[z];
        return 2.0 * (hm * at(z + 1) + hp * at(z - 1) - (hm + hp) * at(z)) / (hm * hp * (hm + hp));
    };
    const double c1 = second(0);
    const double c2 = two_d ? second(1) : c1;
    double scale = 0.0;
    for (double l : loss) scale = std::max(scale, std::abs(l));
    const double tol = 1e-12 * (1.0 + scale);
    int code = 3;
    if (c1 < -tol && c2 < -tol) code = 0;
    else if (c1 > tol && c2 > tol) code = 2;
    else if ((c1 < -tol && c2 > tol) || (c1 > tol && c2 < -tol)) code = 1;
    res.summary.emplace_back("curvature_r1", c1);
    res.summary.emplace_back("curvature_r2", c2);
    res.summary.emplace_back("origin_class", code);
    res.notes.emplace_back("origin", origin_label(code));
    res.plot = two_d ? PlotHint{PlotHint::Kind::heatmap, {"loss"}, false, false, "loss over (r1, r2)"}
                     : PlotHint{PlotHint::Kind::lines, {"loss"}, false, false, "loss along a W*"};
    return res;
}

} // namespace collapselab
