#include "collapselab/losses.hpp"

#include <cmath>
#include <limits>

namespace collapselab {

std::string family_name(Family f) {
    switch (f) {
    case Family::InfoNCE: return "infonce";
    case Family::WeightedInfoNCE: return "weighted_infonce";
    case Family::BetaInfoNCE: return "beta_infonce";
    case Family::SpectralContrastive: return "spectral_contrastive";
    case Family::BarlowTwins: return "barlow_twins";
    case Family::EffectiveQuartic: return "effective_quartic";
    }
    return "unknown";
}

Family parse_family(const std::string& name) {
    for (Family f : {Family::InfoNCE, Family::WeightedInfoNCE, Family::BetaInfoNCE, Family::SpectralContrastive,
                     Family::BarlowTwins, Family::EffectiveQuartic})
        if (family_name(f) == name) return f;
    throw InvalidArgument("unknown loss family '" + name + "'");
}

bool Normalization::infinite() const noexcept { return std::isinf(kappa); }

LossSpec LossSpec::infonce() { return LossSpec{}; }

LossSpec LossSpec::weighted(double alpha, std::size_t n) {
    LossSpec s;
    s.family = Family::WeightedInfoNCE;
    s.alpha = alpha;
    s.n = n;
    s.validate();
    return s;
}

LossSpec LossSpec::beta_infonce(double beta) {
    LossSpec s;
    s.family = Family::BetaInfoNCE;
    s.beta = beta;
    s.validate();
    return s;
}

LossSpec LossSpec::spectral_contrastive() {
    LossSpec s;
    s.family = Family::SpectralContrastive;
    return s;
}

LossSpec LossSpec::barlow_twins() {
    LossSpec s;
    s.family = Family::BarlowTwins;
    return s;
}

LossSpec LossSpec::effective(SymMatrix b) {
    LossSpec s;
    s.family = Family::EffectiveQuartic;
    s.quartic_b = std::move(b);
    return s;
}

LossSpec LossSpec::with_weight_decay(double gamma) const {
    LossSpec s = *this;
    s.weight_decay = gamma;
    s.validate();
    return s;
}

LossSpec LossSpec::with_normalization(double kappa, double target, bool bias) const {
    LossSpec s = *this;
    s.normalization = Normalization{kappa, target};
    s.bias_enabled = bias;
    s.validate();
    return s;
}

void LossSpec::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("alpha must be >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be >= 0");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw InvalidArgument("weight_decay must be >= 0");
    if (family == Family::WeightedInfoNCE && n < 2) throw InvalidArgument("weighted InfoNCE needs n >= 2");
    if (normalization) {
        if (!(normalization->kappa > 0.0)) throw InvalidArgument("kappa must be > 0");
        if (!(normalization->target > 0.0) || !std::isfinite(normalization->target))
            throw InvalidArgument("normalization target must be > 0");
    }
}

double LossSpec::entropy_weight() const noexcept { return family == Family::BetaInfoNCE ? beta : 1.0; }

double LossSpec::positive_weight() const noexcept { return family == Family::WeightedInfoNCE ? alpha : 1.0; }

bool LossSpec::is_contrastive_sample_family() const noexcept {
    return family == Family::InfoNCE || family == Family::WeightedInfoNCE || family == Family::BetaInfoNCE;
}

SymMatrix hessian_b(const LossSpec& spec, const CovarianceModel& cov) {
    spec.validate();
    SymMatrix b;
    switch (spec.family) {
    case Family::InfoNCE:
        b = cov.a0;
        break;
    case Family::WeightedInfoNCE:
        b = cov.a0 - ((1.0 - spec.alpha) / static_cast<double>(spec.n)) * cov.c;
        break;
    case Family::BetaInfoNCE:
        b = cov.a0 - (1.0 - spec.beta) * cov.c;
        break;
    case Family::SpectralContrastive:
        b = 2.0 * cov.c;
        break;
    case Family::BarlowTwins:
        b = 2.0 * cov.sigma;
        break;
    case Family::EffectiveQuartic:
        if (spec.quartic_b.dim() != cov.dim()) throw DimensionError("hessian_b: stored B has wrong dimension");
        b = spec.quartic_b;
        break;
    }
    if (spec.weight_decay != 0.0) b -= spec.weight_decay * SymMatrix::identity(cov.dim());
    return b;
}

double representation_norm(const Matrix& w, const SymMatrix& sigma) {
    return congruence(w, sigma).trace();
}

double quartic_landscape(const SymMatrix& b, const SymMatrix& sigma, const Matrix& w) {
    if (w.cols() != b.dim()) throw DimensionError("effective_loss: W has wrong column count");
    const SymMatrix q = congruence(w, sigma);
    const double f = q.frobenius();
    return -congruence(w, b).trace() + f * f;
}

namespace {

void check_finite_kappa(const LossSpec& spec) {
    if (spec.normalization && spec.normalization->infinite())
        throw UnsupportedInfiniteKappa("effective landscape undefined at kappa = inf; use the limit solver");
}

double bias_sq(const LossSpec& spec, const Weights& w) {
    if (!spec.bias_enabled || !spec.normalization) return 0.0;
    double s = 0.0;
    for (double v : w.b) s += v * v;
    return s;
}

} // namespace

double effective_loss(const LossSpec& spec, const CovarianceModel& cov, const Weights& w) {
    check_finite_kappa(spec);
    const SymMatrix b = hessian_b(spec, cov);
    double loss = quartic_landscape(b, cov.sigma, w.w);
    if (spec.normalization) {
        const double r = representation_norm(w.w, cov.sigma) + bias_sq(spec, w) - spec.normalization->target;
        loss += spec.normalization->kappa * r * r;
    }
    return loss;
}

double effective_loss(const LossSpec& spec, const CovarianceModel& cov, const Matrix& w) {
    return effective_loss(spec, cov, Weights(w));
}

Gradient effective_grad(const LossSpec& spec, const CovarianceModel& cov, const Weights& w) {
    check_finite_kappa(spec);
    const SymMatrix b = hessian_b(spec, cov);
    if (w.w.cols() != cov.dim()) throw DimensionError("effective_grad: W has wrong column count");
    const Matrix ws = w.w * cov.sigma;
    const SymMatrix q(matmul(ws, w.w.transpose()));
    Gradient g;
    g.dw = -2.0 * (w.w * b) + 4.0 * matmul(q.full(), ws);
    g.db.assign(w.b.size(), 0.0);
    if (spec.normalization) {
        const double r = q.trace() + bias_sq(spec, w) - spec.normalization->target;
        const double k = spec.normalization->kappa;
        g.dw += (4.0 * k * r) * ws;
        if (spec.bias_enabled)
            for (std::size_t i = 0; i < w.b.size(); ++i) g.db[i] = 4.0 * k * r * w.b[i];
    }
    return g;
}

Matrix effective_grad(const LossSpec& spec, const CovarianceModel& cov, const Matrix& w) {
    return effective_grad(spec, cov, Weights(w)).dw;
}

} // namespace collapselab
