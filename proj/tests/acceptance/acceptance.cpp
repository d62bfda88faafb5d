// Acceptance run: one PASS/FAIL line per criterion. Each criterion also has a
// wall-clock budget that counts toward its verdict. The process exits 0 once
// every criterion has been evaluated; verdicts are reported, not enforced.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "collapselab/experiments.hpp"
#include "collapselab/losses.hpp"
#include "collapselab/parallel.hpp"
#include "collapselab/rng.hpp"
#include "collapselab/runner.hpp"
#include "collapselab/solver.hpp"
#include "collapselab/trainer.hpp"

using namespace collapselab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
    return v;
}

std::vector<double> logspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = std::pow(10.0, a + (b - a) * i / (n - 1));
    return v;
}

Matrix random_rotation(std::size_t n, Philox& rng) {
    Matrix x(n, n);
    for (double& v : x.data()) v = rng.normal();
    return eig_sym(SymMatrix(matmul(x, x.transpose()))).vectors;
}

/// A0 and C diagonal in a shared random basis.
CovarianceModel commuting_instance_of(std::size_t n, Philox& rng, double c_scale = 3.0) {
    std::vector<double> a(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = 0.2 + 2.0 * rng.uniform();
        c[i] = c_scale * rng.uniform();
    }
    const Matrix q = random_rotation(n, rng);
    return CovarianceModel(congruence(q, SymMatrix::diagonal(a)), congruence(q, SymMatrix::diagonal(c)));
}

LossSpec random_family(int k, std::size_t d, Philox& rng) {
    switch (k % 6) {
    case 0: return LossSpec::infonce();
    case 1: return LossSpec::weighted(rng.uniform(), 2 + static_cast<std::size_t>(rng.uniform() * 30));
    case 2: return LossSpec::beta_infonce(1.5 * rng.uniform());
    case 3: return LossSpec::spectral_contrastive();
    case 4: return LossSpec::barlow_twins();
    default: {
        std::vector<double> b(d);
        for (double& v : b) v = 2.0 * rng.uniform() - 0.7;
        return LossSpec::effective(SymMatrix::diagonal(b)).with_weight_decay(0.1 * rng.uniform());
    }
    }
}

/// EffectiveQuartic B must share the instance basis; rebuild it there.
LossSpec align_quartic(LossSpec spec, const CovarianceModel& cov) {
    if (spec.family != Family::EffectiveQuartic) return spec;
    const std::vector<SymMatrix> ms = {cov.a0, cov.c};
    const Matrix q = joint_eigenbasis(ms);
    std::vector<double> diag(spec.quartic_b.dim());
    for (std::size_t i = 0; i < diag.size(); ++i) diag[i] = spec.quartic_b(i, i);
    spec.quartic_b = congruence(q, SymMatrix::diagonal(diag));
    return spec;
}

SymMatrix fd_hessian(const LossSpec& spec, const CovarianceModel& cov, const Matrix& w, double h = 1e-4) {
    const std::size_t p = w.data().size();
    Matrix hm(p, p);
    for (std::size_t k = 0; k < p; ++k) {
        Matrix wp = w, wm = w;
        wp.data()[k] += h;
        wm.data()[k] -= h;
        const Matrix gp = effective_grad(spec, cov, wp);
        const Matrix gm = effective_grad(spec, cov, wm);
        for (std::size_t j = 0; j < p; ++j) hm(k, j) = (gp.data()[j] - gm.data()[j]) / (2.0 * h);
    }
    return SymMatrix(hm);
}

std::size_t positive_count(const SymMatrix& b) {
    const auto v = eig_sym(b).values;
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double x) { return x > 1e-12; }));
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "collapselab");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

// --- criteria ---------------------------------------------------------------------

Verdict stationarity() {
    std::vector<double> worst(200, 0.0);
    std::vector<std::size_t> counts(200, 0);
    parallel_for(200, [&](std::size_t k) {
        Philox rng(mix_seed(1000 + k));
        const std::size_t d = 1 + k % 8;
        const auto cov = commuting_instance_of(d, rng);
        const auto spec = align_quartic(random_family(static_cast<int>(k), d, rng), cov);
        const std::size_t d1 = 1 + static_cast<std::size_t>(rng.uniform() * d);
        for (const auto& p : stationary_points(spec, cov, d1)) {
            worst[k] = std::max(worst[k], effective_grad(spec, cov, lift(p.wtw, d1)).max_abs());
            ++counts[k];
        }
    });
    const double w = *std::max_element(worst.begin(), worst.end());
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    return {w < 1e-7, std::to_string(total) + " stationary points, max |grad| " + fmt("%.2e", w)};
}

Verdict trainer_theory() {
    const std::size_t n_inst = 50;
    std::vector<double> rel(n_inst, 0.0);
    std::vector<int> ok(n_inst, 0), verdict_ok(n_inst, 0);
    parallel_for(n_inst, [&](std::size_t k) {
        Philox rng(mix_seed(2000 + k));
        const std::size_t d = 2 + k % 5;
        const auto cov = commuting_instance_of(d, rng);
        const int fam = static_cast<int>(k % 4 == 3 ? 5 : k % 4);  // InfoNCE, weighted, beta, effective
        const auto spec = align_quartic(random_family(fam, d, rng), cov);
        TrainConfig t;
        t.optimizer = TrainConfig::Optimizer::gradient_descent;
        t.auto_lr = true;
        t.max_iters = 2000000;
        t.grad_tol = 1e-12;
        t.seed = 7 + k;
        try {
            const auto rec = train(spec, ClosedFormSource{cov}, d, t);
            const auto rep = verify_against_theory(rec, spec, cov, 1e-3);
            rel[k] = rep.max_rel_error;
            ok[k] = rep.pass;
            // Independent verdict check against predict_collapse.
            const auto pc = predict_collapse(spec, cov);
            const auto eigs = eig_sym(gram(rec.final_weights.w)).values;
            const std::size_t trained_alive = static_cast<std::size_t>(
                std::count_if(eigs.begin(), eigs.end(), [](double v) { return v > 1e-6; }));
            verdict_ok[k] = trained_alive == d - pc.collapsed_count();
        } catch (const Error&) {
            ok[k] = 0;
        }
    });
    const int passed = std::accumulate(ok.begin(), ok.end(), 0);
    const int verdicts = std::accumulate(verdict_ok.begin(), verdict_ok.end(), 0);
    const double worst = *std::max_element(rel.begin(), rel.end());
    return {passed == static_cast<int>(n_inst) && verdicts == static_cast<int>(n_inst),
            std::to_string(passed) + "/50 within 1e-3, " + std::to_string(verdicts) +
                "/50 verdicts match, worst rel error " + fmt("%.2e", worst)};
}

Verdict infonce_never_collapses() {
    Philox rng(mix_seed(3000));
    std::vector<double> a(32);
    for (double& v : a) v = 0.2 + 1.8 * rng.uniform();
    const SymMatrix a0 = SymMatrix::diagonal(a);
    const auto sigmas = logspace(-1.0, 3.0, 41);
    double worst_rel = 0.0, min_eig = 1e300;
    for (double s : sigmas) {
        const CovarianceModel cov(a0, s * s * SymMatrix::identity(32));
        auto got = eig_sym(global_minimum(LossSpec::infonce(), cov, 32).wtw).values;
        std::vector<double> want(32);
        for (std::size_t i = 0; i < 32; ++i) want[i] = 0.5 * a[i] / ((a[i] + s * s) * (a[i] + s * s));
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        for (std::size_t i = 0; i < 32; ++i) {
            worst_rel = std::max(worst_rel, std::abs(got[i] - want[i]) / want[i]);
            min_eig = std::min(min_eig, got[i]);
        }
    }
    const auto res = sigma_scaling(SigmaScalingParams{a0, sigmas, SweepMode::analytic, {}});
    const double slope = res.summary_value("top_decade_slope");
    return {min_eig > 0.0 && worst_rel <= 1e-10 && std::abs(std::abs(slope) - 4.0) <= 0.2,
            "min eig " + fmt("%.3e", min_eig) + ", max rel error " + fmt("%.1e", worst_rel) + ", slope " +
                fmt("%.4f", slope)};
}

Verdict critical_n() {
    CriticalNParams p;
    for (int n = 2; n <= 64; ++n) p.ns.push_back(n);
    const auto analytic = critical_n_sweep(p);
    const bool flip = analytic.summary_value("flip_after_n") == 22.0 && analytic.summary_value("flip_before_n") == 23.0;

    CriticalNParams t;
    t.ns = {8, 64};
    t.mode = SweepMode::trained;
    t.mc_draws = 16;
    t.seed = 4;
    t.train.seed = 4;  // Adam, lr 6e-4, 5000 full-batch iterations
    const auto trained = critical_n_sweep(t);
    const double r8 = trained.grid.get(0, "smallest_ratio");
    const double r64 = trained.grid.get(1, "smallest_ratio");
    const bool trained_ok = r8 < 1e-4 && r64 > 1e-2;
    return {flip && trained_ok, "analytic flip between N=" + fmt("%.0f", analytic.summary_value("flip_after_n")) +
                                    " and " + fmt("%.0f", analytic.summary_value("flip_before_n")) +
                                    "; trained min/max eig ratio N=8 " + fmt("%.2e", r8) + ", N=64 " +
                                    fmt("%.2e", r64) + " (needs <1e-4 and >1e-2)"};
}

Verdict beta_control() {
    const std::vector<double> c = {0, 1, 2, 4, 8};
    const std::vector<bool> expect = {false, false, true, true, true};  // (1 - 0.5) c_i >= 1
    BetaSweepParams p;
    p.betas = {0.5};
    const auto an = beta_collapse_sweep(p);
    p.mode = SweepMode::trained;
    p.train.optimizer = TrainConfig::Optimizer::gradient_descent;
    p.train.auto_lr = true;
    p.train.max_iters = 1000000;
    p.train.grad_tol = 1e-11;
    const auto tr = beta_collapse_sweep(p);
    bool ok = true;
    for (std::size_t i = 0; i < 5; ++i) {
        const std::string s = std::to_string(i);
        ok = ok && (an.grid.get(0, "predicted_collapse_" + s) == 1.0) == expect[i];
        ok = ok && (an.grid.get(0, "eig_" + s) == 0.0) == expect[i];
        ok = ok && (tr.grid.get(0, "trained_collapse_" + s) == 1.0) == expect[i];
    }
    const CovarianceModel cov(SymMatrix::identity(5), SymMatrix::diagonal(c));
    const double diff = (global_minimum(LossSpec::beta_infonce(1.0), cov, 5).wtw.full() -
                         global_minimum(LossSpec::infonce(), cov, 5).wtw.full())
                            .max_abs();
    return {ok && diff <= 1e-10, std::string(ok ? "collapsed modes {2,3,4} in analytic and trained runs"
                                                : "collapse pattern mismatch") +
                                     ", beta=1 vs InfoNCE max diff " + fmt("%.1e", diff)};
}

Verdict normalization_limit() {
    bool ok = true;
    std::string detail;
    double worst_rho = 0.0, worst_grad = 0.0;
    for (int inst = 0; inst < 3; ++inst) {
        Philox rng(mix_seed(6000 + inst));
        const std::size_t d = 4 + inst;
        const auto cov = commuting_instance_of(d, rng, 0.5);
        const double target = 1.0;
        const auto limit = normalized_global_limit(LossSpec::infonce().with_normalization(INFINITY, target), cov, d);
        worst_rho = std::max(worst_rho, std::abs(trace_product(limit.wtw, cov.sigma) - target));
        std::vector<double> errs;
        for (double kappa : {1e2, 1e3, 1e4}) {
            const auto spec = LossSpec::infonce().with_normalization(kappa, target);
            const auto sol = normalized_solution_for_mask(spec, cov, limit.mask);
            worst_grad = std::max(worst_grad, effective_grad(spec, cov, lift(sol.wtw, d)).max_abs());
            errs.push_back((sol.wtw.full() - limit.wtw.full()).max_abs());
        }
        // At least linear: err(kappa) * kappa must not grow.
        const bool linear = errs[1] <= 0.1 * errs[0] * 1.05 && errs[2] <= 0.1 * errs[1] * 1.05;
        ok = ok && linear;
        detail += (inst ? ", " : "errors ") + fmt("%.1e", errs[0]) + "/" + fmt("%.1e", errs[1]) + "/" +
                  fmt("%.1e", errs[2]);
    }
    const auto cases = appendix_c_cases(CovarianceModel(SymMatrix::diagonal({1.0, 0.8, 0.6, 0.5}),
                                                        SymMatrix::zeros(4)),
                                        1.0, 0.1);
    const bool cases_ok = cases.small_augmentation.pass && cases.strong_single_mode.pass && cases.weak_single_mode.pass;
    ok = ok && worst_rho <= 1e-8 && worst_grad < 1e-7 && cases_ok;
    return {ok, detail + "; |rho - c| " + fmt("%.1e", worst_rho) + "; finite-kappa |grad| " + fmt("%.1e", worst_grad) +
                    "; three case checks " + (cases_ok ? "pass" : "FAIL")};
}

Verdict bias_theorem() {
    Philox rng(mix_seed(7000));
    std::vector<double> a(8), c(8);
    for (std::size_t i = 0; i < 8; ++i) {
        a[i] = 0.5 + 1.5 * rng.uniform();
        c[i] = 1e-3 * a[i];
    }
    const CovarianceModel cov(SymMatrix::diagonal(a), SymMatrix::diagonal(c));
    // B = A0 - C, so lambda_i = (a_i - c_i) / (a_i + c_i).
    const auto base = LossSpec::beta_infonce(0.0);
    const auto rep = bias_constrained_solutions(base.with_normalization(1.0, 1.0, true), cov, 8);
    bool feasible_ok = !rep.solutions.empty();
    for (const auto& s : rep.solutions) feasible_ok = feasible_ok && s.point.rank <= 2;

    double lam_min = 1e300;
    for (std::size_t i = 0; i < 8; ++i) lam_min = std::min(lam_min, (a[i] - c[i]) / (a[i] + c[i]));
    const auto low = bias_constrained_solutions(base.with_normalization(1.0, 0.9 * lam_min, true), cov, 8);
    const auto high = bias_constrained_solutions(base.with_normalization(1.0, 1.1 * lam_min, true), cov, 8);
    const bool flag_ok = low.complete_collapse_possible && !high.complete_collapse_possible;
    return {feasible_ok && flag_ok, std::to_string(rep.solutions.size()) + " feasible solutions, max d_M " +
                                        std::to_string(rep.max_d_m) + "; complete-collapse flag " +
                                        (flag_ok ? "set below and clear above the threshold" : "wrong")};
}

Verdict max_rank() {
    const std::size_t n_inst = 120;
    std::vector<int> bad(n_inst, 0), minima(n_inst, 0), points(n_inst, 0);
    parallel_for(n_inst, [&](std::size_t k) {
        Philox rng(mix_seed(8000 + k));
        const std::size_t d = 1 + k % 4;
        const auto cov = commuting_instance_of(d, rng);
        const auto spec = align_quartic(random_family(static_cast<int>(k / 4), d, rng), cov);
        const std::size_t d1 = 1 + static_cast<std::size_t>(rng.uniform() * d);
        const std::size_t d_star = positive_count(hessian_b(spec, cov));
        for (const auto& p : stationary_points(spec, cov, d1)) {
            ++points[k];
            const auto h = eig_sym(fd_hessian(spec, cov, lift(p.wtw, d1)));
            const bool psd = h.values.back() > -1e-5;
            if (psd != p.is_local_min) ++bad[k];
            if (psd) {
                ++minima[k];
                if (p.rank != std::min(d1, d_star)) ++bad[k];
            }
        }
        if (minima[k] == 0) ++bad[k];
    });
    const int nb = std::accumulate(bad.begin(), bad.end(), 0);
    return {nb == 0, std::to_string(std::accumulate(points.begin(), points.end(), 0)) + " stationary points on " +
                         std::to_string(n_inst) + " instances, " + std::to_string(std::accumulate(minima.begin(), minima.end(), 0)) +
                         " local minima, " + std::to_string(nb) + " violations"};
}

Verdict quartic_expansion() {
    const Dataset ds = sample_gaussian(4, 4096, SymMatrix::diagonal({1.5, 1.0, 0.7, 0.4}), mix_seed(9000));
    const auto aug = AugmentationSpec::make_isotropic(0.7);
    const DrawSet draws = make_draws(ds, aug, 64, mix_seed(9001));
    Philox rng(mix_seed(9002));
    Matrix w0(4, 4);
    for (double& v : w0.data()) v = 0.5 * rng.normal();
    std::vector<double> lt, lr;
    for (double t : {0.01, 0.02, 0.05, 0.1}) {
        const auto e = expansion_terms(LossSpec::infonce(), draws, t * w0);
        lt.push_back(std::log(t));
        lr.push_back(std::log(std::abs(e.delta - e.quadratic - e.quartic)));
    }
    const double mx = std::accumulate(lt.begin(), lt.end(), 0.0) / lt.size();
    const double my = std::accumulate(lr.begin(), lr.end(), 0.0) / lr.size();
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lt.size(); ++i) {
        sxy += (lt[i] - mx) * (lr[i] - my);
        sxx += (lt[i] - mx) * (lt[i] - mx);
    }
    const double slope = sxy / sxx;
    return {slope >= 5.5, "residual slope " + fmt("%.3f", slope)};
}

Verdict phase_and_downstream() {
    PhaseParams p;
    p.sigmas = linspace(0.0, 4.0, 17);
    p.thetas = linspace(0.0, 1.0, 21);
    const auto ph = phase_diagram(p);
    auto oracle = [&](std::size_t i, std::size_t j) {
        const double s2 = p.sigmas[i] * p.sigmas[i], th = p.thetas[j];
        return ((1 - p.beta) * s2 * (1 - th) >= p.a1 ? 1 : 0) + ((1 - p.beta) * s2 * th >= p.a2 ? 2 : 0);
    };
    int mismatches = 0, far = 0;
    for (std::size_t i = 0; i < p.sigmas.size(); ++i)
        for (std::size_t j = 0; j < p.thetas.size(); ++j) {
            const int got = static_cast<int>(ph.grid.get(ph.grid.cell({i, j}), "pattern"));
            if (got == oracle(i, j)) continue;
            ++mismatches;
            bool near = false;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                    if (ii < 0 || jj < 0 || ii >= static_cast<long>(p.sigmas.size()) ||
                        jj >= static_cast<long>(p.thetas.size()))
                        continue;
                    near = near || oracle(ii, jj) == got;
                }
            if (!near) ++far;
        }

    DownstreamParams dp;
    dp.sigmas = linspace(0.0, 4.0, 17);
    const auto ds = downstream_eval(dp);
    const std::size_t last = dp.sigmas.size() - 1;
    const double mse_one = ds.grid.get(ds.grid.cell({last, 1}), "test_mse");
    const double mse_half = ds.grid.get(ds.grid.cell({last, 0}), "test_mse");
    const double var_y = ds.summary_value("var_y");
    const double baseline = ds.summary_value("baseline_mse");
    bool complete_ok = true;
    int complete_cells = 0;
    for (std::size_t i = 0; i < dp.sigmas.size(); ++i) {
        const std::size_t cell = ds.grid.cell({i, 0});
        if (ds.grid.get(cell, "pattern") != 3.0) continue;
        ++complete_cells;
        complete_ok = complete_ok && std::abs(ds.grid.get(cell, "test_mse") - var_y) <= 0.05 * var_y;
    }
    const bool ok = far == 0 && mse_one < mse_half && complete_cells > 0 && complete_ok && mse_one <= 2.0 * baseline;
    return {ok, std::to_string(mismatches) + " boundary cells differ (" + std::to_string(far) +
                    " beyond one cell); at sigma=4 MSE(theta=1) " + fmt("%.3e", mse_one) + " vs MSE(theta=0.5) " +
                    fmt("%.4f", mse_half) + ", Var[y] " + fmt("%.4f", var_y) + ", clean baseline " +
                    fmt("%.3e", baseline)};
}

Verdict imbalance() {
    ImbalanceParams p;
    p.proportions = linspace(0.5, 0.98, 25);
    const auto res = imbalance_robustness(p);
    const auto scl = res.grid.column("angle_scl");
    const auto inf = res.grid.column("angle_infonce");
    const double scl_max = *std::max_element(scl.begin(), scl.end());
    bool increasing = true;
    for (std::size_t k = 1; k < inf.size(); ++k) increasing = increasing && inf[k] > inf[k - 1];
    return {scl_max <= 1e-9 && increasing, "max SCL angle " + fmt("%.1e", scl_max) + ", InfoNCE angle 0 -> " +
                                               fmt("%.4f", inf.back()) + (increasing ? " strictly increasing" : " NOT monotone")};
}

Verdict critical_slowdown() {
    const std::vector<double> deltas = {0.4, 0.2, 0.1, 0.05};
    // Mode 1 has b = a - (1 - beta) c = 2 beta - 1, critical at beta = 0.5.
    auto cov_of = [](double) { return CovarianceModel(SymMatrix::identity(2), SymMatrix::diagonal({2.0, 0.0})); };
    TrainConfig cfg;
    cfg.optimizer = TrainConfig::Optimizer::gradient_descent;
    cfg.lr = 0.05;
    cfg.max_iters = 2000000;
    cfg.grad_tol = 1e-8;
    cfg.watch = {1.0, 0.0};
    std::string detail;
    bool ok = true;
    for (double side : {1.0, -1.0}) {
        std::vector<double> ts;
        for (double d : deltas) ts.push_back(0.5 + side * d);
        const auto pts = convergence_time_sweep([](double b) { return LossSpec::beta_infonce(b); }, cov_of, ts, 2, cfg);
        std::vector<double> scaled;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!pts[i].iters) {
                ok = false;
                continue;
            }
            scaled.push_back(static_cast<double>(*pts[i].iters) * deltas[i]);
        }
        const double ratio = scaled.empty() ? INFINITY
                                            : *std::max_element(scaled.begin(), scaled.end()) /
                                                  *std::min_element(scaled.begin(), scaled.end());
        ok = ok && ratio <= 3.0;
        detail += std::string(side > 0 ? "surviving side iters " : "; collapsing side iters ");
        for (std::size_t i = 0; i < pts.size(); ++i)
            detail += (i ? "/" : "") + (pts[i].iters ? std::to_string(*pts[i].iters) : std::string("none"));
        detail += " (iters*delta spread " + fmt("%.2f", ratio) + ")";
    }
    return {ok, detail};
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "collapselab_acceptance";
    fs::remove_all(root);
    const std::vector<std::vector<std::string>> runs = {
        {"sweep:sigma_scaling"},
        {"sweep:critical_n_sweep"},
        {"sweep:beta_collapse_sweep"},
        {"sweep:normalization_collapse"},
        {"sweep:phase_diagram"},
        {"sweep:downstream_eval"},
        {"sweep:imbalance_robustness"},
        {"sweep:beta_collapse_sweep", "--set", "sweep.mode=trained", "--set", "sweep.beta_collapse_sweep.betas=[0.5,1]",
         "--set", "trainer.optimizer=gd", "--set", "trainer.auto_lr=true", "--set", "trainer.max_iters=50000"},
        {"sweep:critical_n_sweep", "--set", "sweep.mode=trained", "--set", "sweep.critical_n_sweep.ns=[8,16]",
         "--set", "trainer.max_iters=300"},
        {"train", "--set", "trainer.source=samples", "--set", "trainer.n_samples=64", "--set", "trainer.max_iters=200"},
        {"slice"},
        {"solve"},
    };
    int same = 0;
    std::string bad;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const fs::path a = root / ("a" + std::to_string(i)), b = root / ("b" + std::to_string(i));
        auto args = runs[i];
        args.insert(args.end(), {"--out", a.string(), "--seed", std::to_string(40 + i), "--threads", "1"});
        if (cli(args) != 0) {
            bad += " " + runs[i][0] + "(run failed)";
            continue;
        }
        if (cli({"--config", (a / "meta.json").string(), "--out", b.string(), "--threads", "8"}) != 0) {
            bad += " " + runs[i][0] + "(rerun failed)";
            continue;
        }
        if (slurp(a / "results.csv") == slurp(b / "results.csv") && !slurp(a / "results.csv").empty()) ++same;
        else bad += " " + runs[i][0];
    }
    fs::remove_all(root);
    return {same == static_cast<int>(runs.size()),
            std::to_string(same) + "/" + std::to_string(runs.size()) +
                " re-runs from meta.json byte-identical (1 vs 8 threads)" + (bad.empty() ? "" : "; differ:" + bad)};
}

} // namespace

int main() {
    set_thread_count(std::max(1U, std::thread::hardware_concurrency()));
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> all = {
        {1, "stationarity oracle", 10, stationarity},
        {2, "trainer-theory agreement", 120, trainer_theory},
        {3, "InfoNCE never collapses", 5, infonce_never_collapses},
        {4, "weighted InfoNCE critical N", 180, critical_n},
        {5, "beta-InfoNCE control", 60, beta_control},
        {6, "normalization limit", 10, normalization_limit},
        {7, "bias theorem", 5, bias_theorem},
        {8, "maximal rank of local minima", 60, max_rank},
        {9, "quartic expansion", 120, quartic_expansion},
        {10, "phase diagram and downstream", 300, phase_and_downstream},
        {11, "imbalance robustness", 60, imbalance},
        {12, "critical slowdown", 180, critical_slowdown},
        {13, "determinism", 300, determinism},
    };
    int passed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = secs <= c.budget_s;
        const bool ok = v.pass && in_budget;
        passed += ok;
        std::printf("criterion %2d %s  %s: %s [%.1fs of %.0fs]%s\n", c.id, ok ? "PASS" : "FAIL", c.name,
                    v.detail.c_str(), secs, c.budget_s, in_budget ? "" : " over budget");
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria pass\n", passed, all.size());
    return 0;
}
