#include "collapselab/runner.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <thread>

#include "collapselab/experiments.hpp"
#include "collapselab/io.hpp"
#include "collapselab/parallel.hpp"
#include "collapselab/rng.hpp"
#include "collapselab/solver.hpp"
#include "collapselab/svg.hpp"

#ifndef COLLAPSELAB_GIT_DESCRIBE
#define COLLAPSELAB_GIT_DESCRIBE "unknown"
#endif

namespace collapselab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string build_describe() { return COLLAPSELAB_GIT_DESCRIBE; }

Config resolve_config(const RunOptions& opts) {
    Config cfg = opts.config_path ? Config::load(*opts.config_path) : Config();
    for (const auto& o : opts.overrides) cfg.set_override(o);
    if (opts.command) cfg.set("command", *opts.command);
    if (opts.out) cfg.set("out", *opts.out);
    if (opts.seed) cfg.set("seed", *opts.seed);
    if (opts.threads) cfg.set("threads", *opts.threads);
    return cfg;
}

// --- builders --------------------------------------------------------------------

namespace {

std::size_t dim0(const Config& cfg) { return static_cast<std::size_t>(cfg.integer("instance.d0")); }

std::size_t dim1(const Config& cfg) {
    const auto d1 = static_cast<std::size_t>(cfg.integer("instance.d1"));
    return d1 == 0 ? dim0(cfg) : d1;
}

SymMatrix matrix_from(const std::vector<double>& v, std::size_t d, const std::string& field) {
    if (v.size() == d) return SymMatrix::diagonal(v);
    if (v.size() != d * d)
        throw ConfigError(field, "config key '" + field + "': expected " + std::to_string(d) + " or " +
                                     std::to_string(d * d) + " numbers, got " + std::to_string(v.size()));
    Matrix m(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) m(i, j) = v[i * d + j];
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * (1.0 + std::abs(m(i, j))))
                throw ConfigError(field, "config key '" + field + "': matrix is not symmetric");
    return SymMatrix(m);
}

Dataset load_dataset(const Config& cfg) {
    const std::string& path = cfg.str("instance.a0.path");
    std::ifstream in(path);
    if (path.empty() || !in) throw ConfigError("instance.a0.path", "cannot open dataset '" + path + "'");
    Dataset ds;
    try {
        ds = read_dataset_csv(in);
    } catch (const Error& e) {
        throw ConfigError("instance.a0.path", e.what());
    }
    if (ds.dim() != dim0(cfg))
        throw ConfigError("instance.d0", "dataset has " + std::to_string(ds.dim()) + " columns but instance.d0 is " +
                                             std::to_string(dim0(cfg)));
    return ds;
}

SymMatrix build_a0(const Config& cfg) {
    const std::size_t d = dim0(cfg);
    const std::string& kind = cfg.str("instance.a0.kind");
    SymMatrix a0;
    if (kind == "identity") a0 = SymMatrix::identity(d);
    else if (kind == "diagonal" || kind == "matrix") {
        const auto v = cfg.list("instance.a0.values");
        if (kind == "diagonal" && v.size() != d)
            throw ConfigError("instance.a0.values", "config key 'instance.a0.values': expected " + std::to_string(d) +
                                                        " diagonal entries, got " + std::to_string(v.size()));
        a0 = matrix_from(v, d, "instance.a0.values");
    } else if (kind == "sampled") {
        a0 = sampled_identity_cov(d, static_cast<std::size_t>(cfg.integer("instance.a0.samples")),
                                  mix_seed(cfg.u64("seed") ^ 0xa0a0ULL));
    } else {
        a0 = empirical_cov(load_dataset(cfg));
    }
    if (!is_psd(a0)) throw ConfigError("instance.a0", "config key 'instance.a0': A0 must be positive semidefinite");
    return a0;
}

SymMatrix build_c(const Config& cfg) {
    const std::size_t d = dim0(cfg);
    const std::string& kind = cfg.str("instance.c.kind");
    const double s = cfg.number("instance.c.sigma");
    if (kind == "zero") return SymMatrix::zeros(d);
    if (kind == "isotropic") return s * s * SymMatrix::identity(d);
    if (kind == "structured") {
        if (d != 2) throw ConfigError("instance.c.kind", "config key 'instance.c.kind': structured needs instance.d0 = 2");
        const double t = cfg.number("instance.c.theta");
        return SymMatrix::diagonal({s * s * (1.0 - t), s * s * t});
    }
    const auto v = cfg.list("instance.c.values");
    if (kind == "diagonal" && v.size() != d)
        throw ConfigError("instance.c.values", "config key 'instance.c.values': expected " + std::to_string(d) +
                                                   " diagonal entries, got " + std::to_string(v.size()));
    SymMatrix c = matrix_from(v, d, "instance.c.values");
    if (!is_psd(c)) throw ConfigError("instance.c", "config key 'instance.c': C must be positive semidefinite");
    return c;
}

AugmentationSpec build_augmentation(const Config& cfg) {
    const std::string& kind = cfg.str("instance.c.kind");
    const double s = cfg.number("instance.c.sigma");
    if (kind == "zero") return AugmentationSpec::make_isotropic(0.0);
    if (kind == "isotropic") return AugmentationSpec::make_isotropic(s);
    if (kind == "structured") {
        if (dim0(cfg) != 2)
            throw ConfigError("instance.c.kind", "config key 'instance.c.kind': structured needs instance.d0 = 2");
        return AugmentationSpec::make_structured(s, cfg.number("instance.c.theta"));
    }
    if (kind == "diagonal") {
        const auto v = cfg.list("instance.c.values");
        if (v.size() != dim0(cfg))
            throw ConfigError("instance.c.values", "config key 'instance.c.values': expected " +
                                                       std::to_string(dim0(cfg)) + " entries");
        return AugmentationSpec::make_diagonal(v);
    }
    throw ConfigError("instance.c.kind", "config key 'instance.c.kind': sample-based training needs a zero, "
                                         "isotropic, diagonal or structured augmentation");
}

Dataset build_dataset(const Config& cfg, const SymMatrix& a0) {
    if (cfg.str("instance.a0.kind") == "dataset") return load_dataset(cfg);
    return sample_gaussian(dim0(cfg), static_cast<std::size_t>(cfg.integer("trainer.n_samples")), a0,
                           mix_seed(cfg.u64("seed") ^ 0xd5d5ULL));
}

} // namespace

CovarianceModel build_covariance(const Config& cfg) { return CovarianceModel(build_a0(cfg), build_c(cfg)); }

LossSpec build_loss(const Config& cfg) {
    LossSpec spec;
    spec.family = parse_family(cfg.str("loss.family"));
    spec.alpha = cfg.number("loss.alpha");
    spec.beta = cfg.number("loss.beta");
    spec.weight_decay = cfg.number("loss.weight_decay");
    const auto n = cfg.integer("loss.n");
    spec.n = static_cast<std::size_t>(n > 0 ? n : cfg.integer("trainer.n_samples"));
    if (spec.family == Family::EffectiveQuartic) {
        const auto b = cfg.list("loss.b");
        if (b.empty()) throw ConfigError("loss.b", "config key 'loss.b': effective_quartic needs B");
        spec.quartic_b = matrix_from(b, dim0(cfg), "loss.b");
    }
    if (cfg.flag("loss.normalized")) {
        const double kappa = cfg.flag("loss.kappa_infinite") ? std::numeric_limits<double>::infinity()
                                                             : cfg.number("loss.kappa");
        spec = spec.with_normalization(kappa, cfg.number("loss.target"), cfg.flag("loss.bias"));
    } else if (cfg.flag("loss.bias")) {
        throw ConfigError("loss.bias", "config key 'loss.bias': a bias only matters with loss.normalized = true");
    }
    try {
        spec.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError("loss", std::string("loss: ") + e.what());
    }
    return spec;
}

TrainConfig build_train_config(const Config& cfg) {
    TrainConfig t;
    t.optimizer = cfg.str("trainer.optimizer") == "gd" ? TrainConfig::Optimizer::gradient_descent
                                                        : TrainConfig::Optimizer::adam;
    t.lr = cfg.number("trainer.lr");
    t.auto_lr = cfg.flag("trainer.auto_lr");
    t.beta1 = cfg.number("trainer.beta1");
    t.beta2 = cfg.number("trainer.beta2");
    t.eps = cfg.number("trainer.eps");
    t.max_iters = static_cast<std::size_t>(cfg.integer("trainer.max_iters"));
    t.grad_tol = cfg.number("trainer.grad_tol");
    t.init_scale = cfg.number("trainer.init_scale");
    t.record_every = static_cast<std::size_t>(cfg.integer("trainer.record_every"));
    t.seed = cfg.u64("seed");
    try {
        t.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError("trainer", e.what());
    }
    return t;
}

// --- commands ----------------------------------------------------------------------

namespace {

struct Outcome {
    ExperimentResult result;
    bool has_plot = true;
};

std::vector<double> index_axis(std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    return v;
}

std::vector<std::string> eig_keys(std::size_t d) {
    std::vector<std::string> k;
    for (std::size_t i = 0; i < d; ++i) k.push_back("eig_" + std::to_string(i));
    return k;
}

std::string cell_text(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

void print_table(const SweepGrid& g, std::ostream& out) {
    std::vector<std::string> head;
    for (const auto& a : g.axes()) head.push_back(a.name);
    for (const auto& k : g.text_keys()) head.push_back(k);
    for (const auto& k : g.keys()) head.push_back(k);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
        std::vector<std::string> r;
        for (std::size_t a = 0; a < g.axes().size(); ++a) r.push_back(cell_text(g.coord(c, a)));
        for (const auto& k : g.text_keys()) r.push_back(g.text(c, k));
        for (const auto& k : g.keys()) r.push_back(g.failed(c) ? "failed" : cell_text(g.get(c, k)));
        rows.push_back(std::move(r));
    }
    std::vector<std::size_t> w(head.size());
    for (std::size_t i = 0; i < head.size(); ++i) {
        w[i] = head[i].size();
        for (const auto& r : rows) w[i] = std::max(w[i], r[i].size());
    }
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "  " : "") << std::setw(static_cast<int>(w[i])) << r[i];
        out << '\n';
    };
    line(head);
    for (const auto& r : rows) line(r);
}

ExperimentResult cmd_solve(const Config& cfg) {
    const CovarianceModel cov = build_covariance(cfg);
    const LossSpec spec = build_loss(cfg);
    const std::size_t d = cov.dim(), d1 = dim1(cfg);
    ExperimentResult res;
    std::vector<std::string> keys = {"rank", "loss", "local_min", "global"};
    const auto ek = eig_keys(d);
    keys.insert(keys.end(), ek.begin(), ek.end());
    auto fill_eigs = [&](std::size_t row, const SymMatrix& wtw) {
        const auto e = eig_sym(wtw).values;
        for (std::size_t i = 0; i < d; ++i) res.grid.set(row, ek[i], std::abs(e[i]) < 1e-14 ? 0.0 : e[i]);
    };

    if (!spec.normalization) {
        const auto pts = stationary_points(spec, cov, d1);
        const auto best = global_minimum(spec, cov, d1);
        res.grid = SweepGrid({Axis{"index", index_axis(pts.size()), false}}, keys, {"mask"});
        for (std::size_t r = 0; r < pts.size(); ++r) {
            res.grid.set_text(r, "mask", pts[r].mask.to_string());
            res.grid.set(r, "rank", static_cast<double>(pts[r].rank));
            res.grid.set(r, "loss", pts[r].loss_value);
            res.grid.set(r, "local_min", pts[r].is_local_min ? 1.0 : 0.0);
            res.grid.set(r, "global", pts[r].mask == best.mask ? 1.0 : 0.0);
            fill_eigs(r, pts[r].wtw);
        }
        res.summary.emplace_back("global_loss", best.loss_value);
        res.summary.emplace_back("global_rank", static_cast<double>(best.rank));
        res.notes.emplace_back("global_mask", best.mask.to_string());
        return res;
    }

    if (spec.bias_enabled) {
        const auto rep = bias_constrained_solutions(spec, cov, d1);
        keys.push_back("rho");
        keys.push_back("bias_norm_sq");
        res.grid = SweepGrid({Axis{"index", index_axis(rep.solutions.size()), false}}, keys, {"mask"});
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : rep.solutions) best = std::min(best, s.point.loss_value);
        for (std::size_t r = 0; r < rep.solutions.size(); ++r) {
            const auto& s = rep.solutions[r];
            res.grid.set_text(r, "mask", s.point.mask.to_string());
            res.grid.set(r, "rank", static_cast<double>(s.point.rank));
            res.grid.set(r, "loss", s.point.loss_value);
            res.grid.set(r, "local_min", s.point.is_local_min ? 1.0 : 0.0);
            res.grid.set(r, "global", s.point.loss_value == best ? 1.0 : 0.0);
            res.grid.set(r, "rho", s.rho);
            res.grid.set(r, "bias_norm_sq", s.bias_norm_sq);
            fill_eigs(r, s.point.wtw);
        }
        res.summary.emplace_back("max_d_m", static_cast<double>(rep.max_d_m));
        res.summary.emplace_back("complete_collapse_possible", rep.complete_collapse_possible ? 1.0 : 0.0);
        res.summary.emplace_back("single_mode_infeasible", rep.single_mode_infeasible ? 1.0 : 0.0);
        return res;
    }

    // Normalized without bias: kappa -> inf limit per mask, or finite-kappa stationary points.
    std::vector<NormalizedSolution> sols;
    NormalizedSolution best;
    if (spec.normalization->infinite()) {
        if (d > 16) throw ConfigError("instance.d0", "config key 'instance.d0': kappa = inf enumeration needs d0 <= 16");
        for (std::uint64_t code = 1; code < (std::uint64_t{1} << d); ++code) {
            const Mask m = Mask::from_code(code, d);
            if (m.popcount() > d1) continue;
            sols.push_back(normalized_limit(spec, cov, m));
        }
        best = normalized_global_limit(spec, cov, d1);
    } else {
        sols = normalized_solution_finite_kappa(spec, cov, d1);
    }
    keys = {"d_m", "rho", "feasible", "global"};
    if (!spec.normalization->infinite()) keys.push_back("loss");
    keys.insert(keys.end(), ek.begin(), ek.end());
    res.grid = SweepGrid({Axis{"index", index_axis(sols.size()), false}}, keys, {"mask"});
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> losses(sols.size());
    if (!spec.normalization->infinite()) {
        for (std::size_t r = 0; r < sols.size(); ++r) {
            losses[r] = effective_loss(spec, cov, lift(sols[r].wtw, d1));
            best_loss = std::min(best_loss, losses[r]);
        }
    }
    for (std::size_t r = 0; r < sols.size(); ++r) {
        res.grid.set_text(r, "mask", sols[r].mask.to_string());
        res.grid.set(r, "d_m", static_cast<double>(sols[r].d_m));
        res.grid.set(r, "rho", sols[r].rho);
        res.grid.set(r, "feasible", sols[r].feasible ? 1.0 : 0.0);
        const bool is_best = spec.normalization->infinite() ? sols[r].mask == best.mask : losses[r] == best_loss;
        res.grid.set(r, "global", is_best ? 1.0 : 0.0);
        if (!spec.normalization->infinite()) res.grid.set(r, "loss", losses[r]);
        fill_eigs(r, sols[r].wtw);
    }
    if (spec.normalization->infinite()) {
        res.notes.emplace_back("global_mask", best.mask.to_string());
        res.summary.emplace_back("global_d_m", static_cast<double>(best.d_m));
        res.summary.emplace_back("global_rho", best.rho);
    } else {
        res.summary.emplace_back("global_loss", best_loss);
    }
    return res;
}

ExperimentResult cmd_predict(const Config& cfg) {
    const CovarianceModel cov = build_covariance(cfg);
    LossSpec spec = build_loss(cfg);
    spec.normalization.reset();
    spec.bias_enabled = false;
    const auto rep = predict_collapse(spec, cov);
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"mode", index_axis(rep.modes.size()), false}},
                         {"a", "c", "b", "lhs", "rhs", "collapses"});
    for (std::size_t r = 0; r < rep.modes.size(); ++r) {
        const auto& v = rep.modes[r];
        res.grid.set(r, "a", v.a);
        res.grid.set(r, "c", v.c);
        res.grid.set(r, "b", v.b);
        res.grid.set(r, "lhs", v.lhs);
        res.grid.set(r, "rhs", v.rhs);
        res.grid.set(r, "collapses", v.collapses ? 1.0 : 0.0);
    }
    res.summary.emplace_back("collapsed_modes", static_cast<double>(rep.collapsed_count()));
    res.summary.emplace_back("complete_collapse", rep.complete_collapse ? 1.0 : 0.0);
    res.summary.emplace_back("dimensional_collapse", rep.dimensional_collapse ? 1.0 : 0.0);
    res.summary.emplace_back("commuting", rep.commuting ? 1.0 : 0.0);
    res.plot = PlotHint{PlotHint::Kind::lines, {"b"}, false, false, "governing eigenvalue per mode"};
    return res;
}

ExperimentResult trajectory_result(const TrajectoryRecord& rec, std::size_t d) {
    ExperimentResult res;
    std::vector<std::string> keys = {"loss", "grad_norm"};
    const auto ek = eig_keys(d);
    keys.insert(keys.end(), ek.begin(), ek.end());
    std::vector<double> iters;
    for (const auto& c : rec.checkpoints) iters.push_back(static_cast<double>(c.iter));
    res.grid = SweepGrid({Axis{"iter", iters, false}}, keys);
    for (std::size_t r = 0; r < rec.checkpoints.size(); ++r) {
        const auto& c = rec.checkpoints[r];
        res.grid.set(r, "loss", c.loss);
        res.grid.set(r, "grad_norm", c.grad_norm);
        for (std::size_t i = 0; i < d; ++i) res.grid.set(r, ek[i], i < c.eigs.size() ? c.eigs[i] : 0.0);
    }
    res.summary.emplace_back("converged", rec.converged ? 1.0 : 0.0);
    res.summary.emplace_back("iters_to_converge", rec.iters_to_converge ? static_cast<double>(*rec.iters_to_converge)
                                                                        : std::numeric_limits<double>::quiet_NaN());
    if (!rec.checkpoints.empty()) {
        const auto& last = rec.checkpoints.back();
        res.summary.emplace_back("final_loss", last.loss);
        for (std::size_t i = 0; i < last.eigs.size(); ++i)
            res.summary.emplace_back("final_eig_" + std::to_string(i), last.eigs[i]);
    }
    res.plot = PlotHint{PlotHint::Kind::lines, ek, false, true, "eigenvalues of W^T W during training"};
    return res;
}

struct Trained {
    TrajectoryRecord rec;
    CovarianceModel cov;  // the landscape the run should match
};

Trained run_training(const Config& cfg, const LossSpec& spec) {
    const TrainConfig tc = build_train_config(cfg);
    if (spec.normalization && spec.normalization->infinite())
        throw ConfigError("loss.kappa_infinite", "config key 'loss.kappa_infinite': training needs a finite kappa");
    if (cfg.str("trainer.source") == "closed_form") {
        const CovarianceModel cov = build_covariance(cfg);
        return {train(spec, ClosedFormSource{cov}, dim1(cfg), tc), cov};
    }
    if (!spec.is_contrastive_sample_family())
        throw ConfigError("trainer.source", "config key 'trainer.source': the sample loss exists only for "
                                            "infonce, weighted_infonce and beta_infonce");
    const SymMatrix a0 = build_a0(cfg);
    const AugmentationSpec aug = build_augmentation(cfg);
    const Dataset ds = build_dataset(cfg, a0);
    const SampleSource src{ds, aug, static_cast<std::size_t>(cfg.integer("trainer.mc_draws")),
                           mix_seed(cfg.u64("seed") ^ 0xd7d7ULL)};
    const CovarianceModel cov(empirical_cov(ds), augmentation_cov(aug, ds.dim()));
    LossSpec s = spec;
    if (s.family == Family::WeightedInfoNCE && cfg.integer("loss.n") == 0) s.n = ds.n();
    return {train(s, src, dim1(cfg), tc), cov};
}

ExperimentResult cmd_train(const Config& cfg) {
    const LossSpec spec = build_loss(cfg);
    const auto t = run_training(cfg, spec);
    return trajectory_result(t.rec, dim0(cfg));
}

ExperimentResult cmd_verify(const Config& cfg) {
    const LossSpec spec = build_loss(cfg);
    if (spec.normalization) throw ConfigError("loss.normalized", "config key 'loss.normalized': verify compares "
                                                                 "against the unnormalized global minimum");
    const auto t = run_training(cfg, spec);
    LossSpec s = spec;
    if (s.family == Family::WeightedInfoNCE && cfg.integer("loss.n") == 0 && cfg.str("trainer.source") == "samples")
        s.n = static_cast<std::size_t>(cfg.integer("trainer.n_samples"));
    const auto rep = verify_against_theory(t.rec, s, t.cov, cfg.number("verify.tol"));
    ExperimentResult res;
    res.grid = SweepGrid({Axis{"mode", index_axis(rep.modes.size()), false}},
                         {"trained", "theory", "abs_error", "rel_error", "surviving"});
    for (std::size_t r = 0; r < rep.modes.size(); ++r) {
        const auto& m = rep.modes[r];
        res.grid.set(r, "trained", m.trained);
        res.grid.set(r, "theory", m.theory);
        res.grid.set(r, "abs_error", m.abs_error);
        res.grid.set(r, "rel_error", m.rel_error);
        res.grid.set(r, "surviving", m.surviving ? 1.0 : 0.0);
    }
    res.summary.emplace_back("pass", rep.pass ? 1.0 : 0.0);
    res.summary.emplace_back("verdicts_match", rep.verdicts_match ? 1.0 : 0.0);
    res.summary.emplace_back("max_rel_error", rep.max_rel_error);
    res.summary.emplace_back("max_abs_error_collapsed", rep.max_abs_error_collapsed);
    res.summary.emplace_back("iters", t.rec.iters_to_converge ? static_cast<double>(*t.rec.iters_to_converge)
                                                              : std::numeric_limits<double>::quiet_NaN());
    res.plot = PlotHint{PlotHint::Kind::lines, {"trained", "theory"}, false, false, "trained against theory"};
    return res;
}

ExperimentResult cmd_slice(const Config& cfg) {
    SliceParams p;
    p.spec = build_loss(cfg);
    if (p.spec.normalization && p.spec.normalization->infinite())
        throw ConfigError("loss.kappa_infinite", "config key 'loss.kappa_infinite': slices need a finite kappa");
    p.cov = build_covariance(cfg);
    p.d1 = dim1(cfg);
    p.two_d = cfg.flag("slice.two_d");
    p.values = cfg.list("slice.values");
    const auto z = std::find(p.values.begin(), p.values.end(), 0.0);
    if (z == p.values.end() || z == p.values.begin() || z + 1 == p.values.end())
        throw ConfigError("slice.values", "config key 'slice.values': 0 must be an interior grid value");
    if (!commuting_instance(p.spec, p.cov))
        throw ConfigError("instance", "slice: A0, C and B must commute");
    return landscape_slice(p);
}

SymMatrix sweep_a0(const Config& cfg) { return build_a0(cfg); }

ExperimentResult cmd_sweep(const Config& cfg, const std::string& name) {
    const SweepMode mode = parse_mode(cfg.str("sweep.mode"));
    const std::string pre = "sweep." + name + ".";
    const TrainConfig tc = mode == SweepMode::trained ? build_train_config(cfg) : TrainConfig{};
    const std::uint64_t seed = cfg.u64("seed");
    if (name == "sigma_scaling") {
        return sigma_scaling(SigmaScalingParams{sweep_a0(cfg), cfg.list(pre + "sigmas"), mode, tc});
    }
    if (name == "critical_n_sweep") {
        CriticalNParams p;
        p.alpha = cfg.number(pre + "alpha");
        p.sigma = cfg.number(pre + "sigma");
        p.a = cfg.list(pre + "a");
        p.ns = cfg.list(pre + "ns");
        for (double n : p.ns)
            if (n != std::floor(n)) throw ConfigError(pre + "ns", "config key '" + pre + "ns': N must be integers");
        p.mode = mode;
        p.train = tc;
        p.mc_draws = static_cast<std::size_t>(cfg.integer(pre + "mc_draws"));
        p.seed = seed;
        return critical_n_sweep(p);
    }
    if (name == "beta_collapse_sweep") {
        BetaSweepParams p;
        p.a = cfg.list(pre + "a");
        p.c = cfg.list(pre + "c");
        if (p.a.size() != p.c.size())
            throw ConfigError(pre + "c", "config key '" + pre + "c': needs as many entries as " + pre + "a");
        p.betas = cfg.list(pre + "betas");
        p.sigmas = cfg.list(pre + "sigmas");
        p.mode = mode;
        p.train = tc;
        return beta_collapse_sweep(p);
    }
    if (name == "normalization_collapse") {
        NormalizationParams p;
        p.a0 = sweep_a0(cfg);
        p.target = cfg.number(pre + "target");
        p.sigmas = cfg.list(pre + "sigmas");
        p.trained_kappa = cfg.number(pre + "kappa");
        p.mode = mode;
        p.train = tc;
        return normalization_collapse(p);
    }
    if (name == "phase_diagram") {
        return phase_diagram(PhaseParams{cfg.number(pre + "a1"), cfg.number(pre + "a2"), cfg.number(pre + "beta"),
                                         cfg.list(pre + "sigmas"), cfg.list(pre + "thetas")});
    }
    if (name == "downstream_eval") {
        DownstreamParams p;
        p.a1 = cfg.number(pre + "a1");
        p.a2 = cfg.number(pre + "a2");
        p.target_coeff = cfg.number(pre + "target_coeff");
        p.ridge = cfg.number(pre + "ridge");
        if (!(p.ridge > 0.0)) throw ConfigError(pre + "ridge", "config key '" + pre + "ridge': must be > 0");
        p.beta = cfg.number(pre + "beta");
        p.n_train = static_cast<std::size_t>(cfg.integer(pre + "n_train"));
        p.n_test = static_cast<std::size_t>(cfg.integer(pre + "n_test"));
        p.seed = seed;
        p.sigmas = cfg.list(pre + "sigmas");
        p.thetas = cfg.list(pre + "thetas");
        p.mode = mode;
        p.train = tc;
        return downstream_eval(p);
    }
    ImbalanceParams p;
    p.proportions = cfg.list(pre + "proportions");
    p.means = {cfg.list(pre + "mean0"), cfg.list(pre + "mean1")};
    p.class_var = cfg.number(pre + "class_var");
    p.c = cfg.list(pre + "c");
    if (p.means[0].size() != p.c.size() || p.means[1].size() != p.c.size())
        throw ConfigError(pre + "c", "config key '" + pre + "c': mean0, mean1 and c need equal lengths");
    return imbalance_robustness(p);
}

// --- artifacts -----------------------------------------------------------------------

json number_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_results(const fs::path& dir, const ExperimentResult& res, const std::string& command) {
    {
        std::ofstream f(dir / "results.csv", std::ios::binary);
        res.grid.write_csv(f);
    }
    json s = json::object();
    s["command"] = command;
    json sum = json::object();
    for (const auto& [k, v] : res.summary) sum[k] = number_json(v);
    s["summary"] = sum;
    json notes = json::object();
    for (const auto& [k, v] : res.notes) notes[k] = v;
    s["notes"] = notes;
    s["failed_cells"] = [&] {
        std::size_t n = 0;
        for (std::size_t c = 0; c < res.grid.cell_count(); ++c) n += res.grid.failed(c) ? 1 : 0;
        return n;
    }();
    write_text(dir / "summary.json", dump(s));
    if (!res.grid.empty() && !res.grid.keys().empty()) write_text(dir / "plot.svg", render_svg(res.grid, res.plot));
}

void write_meta(const fs::path& dir, const Config& cfg, double wall) {
    json meta = cfg.to_json();
    meta["provenance"] = json{{"git_describe", build_describe()}, {"wall_time_s", wall}, {"tool", "collapselab"}};
    write_text(dir / "meta.json", dump(meta));
}

void write_error(const fs::path& dir, const std::string& kind, const std::string& message, const std::string& command) {
    write_text(dir / "error.json", dump(json{{"error", kind}, {"message", message}, {"command", command}}));
}

unsigned resolve_threads(const Config& cfg) {
    auto n = static_cast<unsigned>(cfg.integer("threads"));
    if (n == 0) {
        if (const char* env = std::getenv("COLLAPSELAB_THREADS")) {
            char* end = nullptr;
            const unsigned long v = std::strtoul(env, &end, 10);
            if (end != env && *end == '\0' && v > 0 && v <= 4096) n = static_cast<unsigned>(v);
            else throw ConfigError("COLLAPSELAB_THREADS", std::string("COLLAPSELAB_THREADS must be a positive integer, got '") + env + "'");
        }
    }
    if (n == 0) n = std::max(1U, std::thread::hardware_concurrency());
    return n;
}

void print_summary(const ExperimentResult& res, std::ostream& out) {
    for (const auto& [k, v] : res.summary) out << k << " = " << cell_text(v) << '\n';
    for (const auto& [k, v] : res.notes) out << k << " = " << v << '\n';
}

} // namespace

int run(const Config& cfg, std::ostream& out, std::ostream& err) {
    const std::string command = cfg.str("command");
    fs::path dir;
    try {
        set_thread_count(resolve_threads(cfg));
        dir = cfg.str("out");
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec || !fs::is_directory(dir)) throw ConfigError("out", "cannot create output directory '" + dir.string() + "'");
    } catch (const ConfigError& e) {
        err << "config error [" << e.field() << "]: " << e.what() << '\n';
        return exit_config;
    }

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    try {
        write_meta(dir, cfg, 0.0);
        ExperimentResult res;
        if (command == "solve") res = cmd_solve(cfg);
        else if (command == "predict") res = cmd_predict(cfg);
        else if (command == "train") res = cmd_train(cfg);
        else if (command == "verify") res = cmd_verify(cfg);
        else if (command == "slice") res = cmd_slice(cfg);
        else res = cmd_sweep(cfg, command.substr(command.find(':') + 1));

        write_results(dir, res, command);
        write_meta(dir, cfg, elapsed());
        if (command == "solve" || command == "predict" || command == "verify") print_table(res.grid, out);
        print_summary(res, out);
        out << "wrote " << (dir / "results.csv").string() << '\n';
        return exit_ok;
    } catch (const ConfigError& e) {
        err << "config error [" << e.field() << "]: " << e.what() << '\n';
        return exit_config;
    } catch (const Diverged& e) {
        const ExperimentResult partial = trajectory_result(e.partial(), dim0(cfg));
        write_results(dir, partial, command);
        write_meta(dir, cfg, elapsed());
        write_error(dir, "Diverged", e.what(), command);
        err << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const InvalidArgument& e) {
        err << "invalid input: " << e.what() << '\n';
        return exit_config;
    } catch (const DimensionError& e) {
        err << "invalid input: " << e.what() << '\n';
        return exit_config;
    } catch (const Error& e) {
        std::string kind = "NumericError";
        if (dynamic_cast<const SingularSigma*>(&e)) kind = "SingularSigma";
        else if (dynamic_cast<const NotConverged*>(&e)) kind = "NotConverged";
        else if (dynamic_cast<const SingularMatrix*>(&e)) kind = "SingularMatrix";
        else if (dynamic_cast<const InvalidCovariance*>(&e)) kind = "InvalidCovariance";
        write_meta(dir, cfg, elapsed());
        write_error(dir, kind, e.what(), command);
        err << "numeric failure (" << kind << "): " << e.what() << '\n';
        return exit_numeric;
    }
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Analytic and trained collapse analysis of linear self-supervised losses"};
    app.footer(config_help());
    RunOptions opts;
    std::string command, config_path, out_dir;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    app.add_option("command", command,
                   "solve, predict, train, verify, slice or sweep:<name> (default: the config's command)");
    auto* c_opt = app.add_option("--config", config_path, "JSON config file");
    auto* o_opt = app.add_option("--out", out_dir, "output directory");
    auto* s_opt = app.add_option("--seed", seed, "master seed");
    auto* t_opt = app.add_option("--threads", threads, "worker threads");
    app.add_option("--set", opts.overrides, "override key.path=value (repeatable)")->allow_extra_args(false);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "argument error: " << e.what() << '\n';
        return exit_config;
    }
    if (!command.empty()) opts.command = command;
    if (*c_opt) opts.config_path = config_path;
    if (*o_opt) opts.out = out_dir;
    if (*s_opt) opts.seed = seed;
    if (*t_opt) opts.threads = threads;
    Config cfg;
    try {
        cfg = resolve_config(opts);
    } catch (const ConfigError& e) {
        err << "config error [" << e.field() << "]: " << e.what() << '\n';
        return exit_config;
    }
    return run(cfg, out, err);
}

} // namespace collapselab
