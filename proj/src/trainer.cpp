#include "collapselab/trainer.hpp"

#include <algorithm>
#include <memory>
#include <cmath>
#include <ostream>
#include <string>

#include "collapselab/io.hpp"
#include "collapselab/rng.hpp"

namespace collapselab {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw InvalidArgument("trainer.lr must be > 0");
    if (!(grad_tol > 0.0)) throw InvalidArgument("trainer.grad_tol must be > 0");
    if (!(init_scale > 0.0)) throw InvalidArgument("trainer.init_scale must be > 0");
    if (record_every == 0) throw InvalidArgument("trainer.record_every must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("trainer.beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("trainer.beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("trainer.eps must be > 0");
}

namespace {

struct Objective {
    std::function<double(const Weights&, Gradient&)> eval;
};

Objective closed_form_objective(const LossSpec& spec, const CovarianceModel& cov) {
    return {[spec, cov](const Weights& w, Gradient& g) {
        g = effective_grad(spec, cov, w);
        return effective_loss(spec, cov, w);
    }};
}

Objective sample_objective(const LossSpec& spec, const SampleSource& src) {
    if (spec.normalization) throw InvalidArgument("sample-based training does not support normalization");
    auto draws = std::make_shared<DrawSet>(make_draws(src.ds, src.aug, src.mc_draws, src.draw_seed));
    return {[spec, draws](const Weights& w, Gradient& g) {
        SampleEstimate e = sample_loss_on(spec, *draws, w.w, true);
        g.dw = std::move(e.grad);
        g.db.assign(w.b.size(), 0.0);
        double loss = e.value;
        if (spec.weight_decay > 0.0) {
            const double f = w.w.frobenius();
            loss += spec.weight_decay * f * f;
            g.dw += (2.0 * spec.weight_decay) * w.w;
        }
        return loss;
    }};
}

std::vector<double> spectrum(const Matrix& w) { return eig_sym(gram(w)).values; }

double watched(const Matrix& w, const std::vector<double>& u) {
    double s = 0.0;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double p = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) p += w(r, c) * u[c];
        s += p * p;
    }
    return s;
}

double max_norm(const Gradient& g) {
    double m = g.dw.max_abs();
    for (double v : g.db) m = std::max(m, std::abs(v));
    return m;
}

} // namespace

TrajectoryRecord train(const LossSpec& spec, const TrainSource& source, std::size_t d1, const TrainConfig& cfg) {
    TrainConfig config = cfg;
    if (config.auto_lr) {
        const auto* cf = std::get_if<ClosedFormSource>(&source);
        if (!cf || config.optimizer != TrainConfig::Optimizer::gradient_descent)
            throw InvalidArgument("trainer.auto_lr needs gradient descent on the closed-form source");
        config.lr = 0.9 * stable_lr(spec, cf->cov);
    }
    config.validate();
    spec.validate();
    if (d1 == 0) throw InvalidArgument("d1 must be >= 1");

    std::size_t d0 = 0;
    Objective obj;
    if (const auto* cf = std::get_if<ClosedFormSource>(&source)) {
        d0 = cf->cov.dim();
        obj = closed_form_objective(spec, cf->cov);
    } else {
        const auto& ss = std::get<SampleSource>(source);
        d0 = ss.ds.dim();
        obj = sample_objective(spec, ss);
    }
    if (!config.watch.empty() && config.watch.size() != d0)
        throw DimensionError("trainer.watch must have d0 entries");

    Philox rng(config.seed);
    const double scale = config.init_scale / std::sqrt(static_cast<double>(d0));
    Weights w(Matrix(d1, d0));
    for (double& v : w.w.data()) v = scale * rng.normal();
    if (spec.bias_enabled && spec.normalization) {
        w.b.resize(d1);
        for (double& v : w.b) v = scale * rng.normal();
    }

    Matrix m1(d1, d0), m2(d1, d0);
    std::vector<double> b1(w.b.size(), 0.0), b2(w.b.size(), 0.0);
    double pow1 = 1.0, pow2 = 1.0;

    TrajectoryRecord rec;
    Gradient g;
    double prev_watch = config.watch.empty() ? 0.0 : watched(w.w, config.watch);
    for (std::size_t it = 0;; ++it) {
        const double loss = obj.eval(w, g);
        const double gnorm = max_norm(g);
        if (!std::isfinite(loss) || loss > 1e12 || !std::isfinite(gnorm)) {
            Checkpoint last{it, loss, gnorm, {}};
            if (w.w.all_finite()) last.eigs = spectrum(w.w);
            rec.final_weights = w;
            throw Diverged("training diverged at iteration " + std::to_string(it), last, rec);
        }

        bool settled = gnorm <= config.grad_tol;
        if (!config.watch.empty()) {
            const double q = watched(w.w, config.watch);
            settled = settled && it > 0 && std::abs(q - prev_watch) < config.watch_tol;
            prev_watch = q;
        }
        const bool last = settled || it == config.max_iters;
        if (last || it % config.record_every == 0) rec.checkpoints.push_back({it, loss, gnorm, spectrum(w.w)});
        if (settled) {
            rec.converged = true;
            rec.iters_to_converge = it;
        }
        if (last) break;

        if (config.optimizer == TrainConfig::Optimizer::gradient_descent) {
            for (std::size_t k = 0; k < w.w.data().size(); ++k) w.w.data()[k] -= config.lr * g.dw.data()[k];
            for (std::size_t k = 0; k < w.b.size(); ++k) w.b[k] -= config.lr * g.db[k];
        } else {
            pow1 *= config.beta1;
            pow2 *= config.beta2;
            auto step = [&](double& p, double grad, double& mm, double& vv) {
                mm = config.beta1 * mm + (1.0 - config.beta1) * grad;
                vv = config.beta2 * vv + (1.0 - config.beta2) * grad * grad;
                const double mhat = mm / (1.0 - pow1);
                const double vhat = vv / (1.0 - pow2);
                p -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
            };
            for (std::size_t k = 0; k < w.w.data().size(); ++k)
                step(w.w.data()[k], g.dw.data()[k], m1.data()[k], m2.data()[k]);
            for (std::size_t k = 0; k < w.b.size(); ++k) step(w.b[k], g.db[k], b1[k], b2[k]);
        }
    }
    rec.final_weights = std::move(w);
    return rec;
}

void write_trajectory_csv(const TrajectoryRecord& rec, std::ostream& out) {
    const std::size_t d = rec.final_weights.w.cols();
    std::vector<std::string> header = {"iter", "loss", "grad_norm"};
    for (std::size_t k = 0; k < d; ++k) header.push_back("eig_" + std::to_string(k));
    out << csv_row(header);
    for (const auto& cp : rec.checkpoints) {
        std::vector<std::string> row = {std::to_string(cp.iter), format_double(cp.loss), format_double(cp.grad_norm)};
        for (std::size_t k = 0; k < d; ++k) row.push_back(k < cp.eigs.size() ? format_double(cp.eigs[k]) : "");
        out << csv_row(row);
    }
}

double stable_lr(const LossSpec& spec, const CovarianceModel& cov) {
    const SymMatrix b = hessian_b(spec, cov);
    const auto bvals = eig_sym(b).values;
    const auto svals = eig_sym(cov.sigma).values;
    const double s_max = svals.empty() ? 0.0 : svals.front();
    double b_abs = 0.0;
    for (double v : bvals) b_abs = std::max(b_abs, std::abs(v));
    double lam_max = 0.0;
    double lam_sum = 0.0;
    if (!svals.empty() && svals.back() > 1e-12) {
        const auto lam = eig_sym(congruence(mat_pow(cov.sigma, -0.5).full(), b)).values;
        for (double v : lam) {
            lam_max = std::max(lam_max, v);
            lam_sum += std::max(0.0, v);
        }
    } else {
        lam_max = b_abs;
        lam_sum = b_abs * static_cast<double>(bvals.size());
    }
    double curv = 2.0 * b_abs + 6.0 * s_max * lam_max;
    if (spec.normalization && std::isfinite(spec.normalization->kappa)) {
        const double c = spec.normalization->target;
        const double rho_max = std::max(c, 0.5 * lam_sum);
        curv += spec.normalization->kappa * s_max * (4.0 * c + 12.0 * rho_max);
    }
    return 1.0 / std::max(curv, 1e-300);
}

VerificationReport verify_against_theory(const TrajectoryRecord& rec, const LossSpec& spec,
                                         const CovarianceModel& cov, double tol) {
    if (!rec.converged) throw NotConverged("verify_against_theory: training did not converge");
    const std::size_t d1 = rec.final_weights.w.rows();
    const StationaryPoint gm = global_minimum(spec, cov, d1);
    const auto theory = eig_sym(gm.wtw).values;
    const auto trained = spectrum(rec.final_weights.w);

    double min_pos = 0.0;
    double max_theory = 0.0;
    for (std::size_t i = 0; i < theory.size(); ++i) {
        max_theory = std::max(max_theory, theory[i]);
        if (i < gm.rank) min_pos = (i == 0) ? theory[i] : std::min(min_pos, theory[i]);
    }
    const double collapse_tol = gm.rank > 0 ? std::min(1e-6, 1e-3 * min_pos) : 1e-6;

    VerificationReport rep;
    for (std::size_t i = 0; i < theory.size(); ++i) {
        ModeError e;
        e.trained = trained[i];
        e.theory = theory[i];
        e.surviving = i < gm.rank;
        e.abs_error = std::abs(e.trained - e.theory);
        e.rel_error = e.surviving ? e.abs_error / e.theory : 0.0;
        if (e.surviving) rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
        else rep.max_abs_error_collapsed = std::max(rep.max_abs_error_collapsed, e.abs_error);
        if (e.trained >= collapse_tol) ++rep.trained_surviving;
        rep.modes.push_back(e);
    }

    // Surviving count implied by the per-mode verdicts, capped by the width.
    const CollapseReport cr = predict_collapse(spec, cov);
    const std::size_t positive = cr.modes.size() - cr.collapsed_count();
    rep.predicted_surviving = std::min(positive, std::min(d1, cov.dim()));
    rep.verdicts_match = rep.trained_surviving == rep.predicted_surviving;
    rep.pass = rep.verdicts_match && rep.max_rel_error <= tol &&
               rep.max_abs_error_collapsed <= std::max(collapse_tol, tol * max_theory);
    return rep;
}

std::vector<ConvergencePoint> convergence_time_sweep(const std::function<LossSpec(double)>& spec_of,
                                                     const std::function<CovarianceModel(double)>& cov_of,
                                                     const std::vector<double>& ts, std::size_t d1,
                                                     const TrainConfig& config) {
    if (config.watch.empty()) throw InvalidArgument("convergence_time_sweep: config.watch must be set");
    std::vector<ConvergencePoint> out;
    for (double t : ts) {
        const TrajectoryRecord rec = train(spec_of(t), ClosedFormSource{cov_of(t)}, d1, config);
        ConvergencePoint p;
        p.t = t;
        p.iters = rec.iters_to_converge;
        p.watched_eig = watched(rec.final_weights.w, config.watch);
        out.push_back(p);
    }
    return out;
}

} // namespace collapselab
