#pragma once

// Loss families: quadratic coefficient B at the origin, the Gaussian
// effective landscape with its gradient, and Monte-Carlo estimators of the
// exact finite-sample contrastive losses.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "collapselab/datamodel.hpp"
#include "collapselab/spectra.hpp"

namespace collapselab {

enum class Family { InfoNCE, WeightedInfoNCE, BetaInfoNCE, SpectralContrastive, BarlowTwins, EffectiveQuartic };

std::string family_name(Family f);
Family parse_family(const std::string& name);

/// kappa (E|f|^2 - target)^2. kappa may be +inf for the hard-constraint limit.
struct Normalization {
    double kappa = 1.0;
    double target = 1.0;

    bool infinite() const noexcept;
};

struct LossSpec {
    Family family = Family::InfoNCE;
    double alpha = 1.0;
    double beta = 1.0;
    SymMatrix quartic_b;  // only for EffectiveQuartic
    double weight_decay = 0.0;
    std::optional<Normalization> normalization;
    bool bias_enabled = false;
    std::size_t n = 0;

    static LossSpec infonce();
    static LossSpec weighted(double alpha, std::size_t n);
    static LossSpec beta_infonce(double beta);
    static LossSpec spectral_contrastive();
    static LossSpec barlow_twins();
    static LossSpec effective(SymMatrix b);

    LossSpec with_weight_decay(double gamma) const;
    LossSpec with_normalization(double kappa, double target, bool bias = false) const;

    /// Throws InvalidArgument on out-of-range hyperparameters.
    void validate() const;
    /// Weight of the log-partition term; beta for BetaInfoNCE, 1 otherwise.
    double entropy_weight() const noexcept;
    /// Weight of the positive pair inside the partition sum.
    double positive_weight() const noexcept;
    bool is_contrastive_sample_family() const noexcept;
};

struct Weights {
    Matrix w;               // d1 x d0
    std::vector<double> b;  // empty when no bias

    Weights() = default;
    explicit Weights(Matrix w_, std::vector<double> b_ = {}) : w(std::move(w_)), b(std::move(b_)) {}
};

struct Gradient {
    Matrix dw;
    std::vector<double> db;
};

/// Quadratic coefficient of the landscape, -Tr[W B W^T]. Weight decay enters
/// as -gamma I.
SymMatrix hessian_b(const LossSpec& spec, const CovarianceModel& cov);

/// rho = Tr[W Sigma W^T].
double representation_norm(const Matrix& w, const SymMatrix& sigma);

/// -Tr[WBW^T] + Tr[(W Sigma W^T)^2] + kappa (rho + |b|^2 - c)^2.
/// Throws UnsupportedInfiniteKappa for kappa = inf.
double effective_loss(const LossSpec& spec, const CovarianceModel& cov, const Weights& w);
double effective_loss(const LossSpec& spec, const CovarianceModel& cov, const Matrix& w);

Gradient effective_grad(const LossSpec& spec, const CovarianceModel& cov, const Weights& w);
Matrix effective_grad(const LossSpec& spec, const CovarianceModel& cov, const Matrix& w);

/// Same landscape with a precomputed B; used in hot loops.
double quartic_landscape(const SymMatrix& b, const SymMatrix& sigma, const Matrix& w);

// --- Monte-Carlo estimators ---------------------------------------------------

struct SampleEstimate {
    double value = 0.0;      // mean loss over draws
    double delta = 0.0;      // value - loss at W = 0, computed without cancellation
    double std_error = 0.0;  // standard error over draws (over anchors when mc_draws == 1)
    Matrix grad;             // filled only by sample_loss_grad
};

/// Exact finite-sample contrastive loss averaged over `mc_draws` augmentation
/// draws. Each draw gives every point two views x_i, x'_i; the anchor x_i is
/// contrasted against all second views with the positive weighted by alpha.
/// `shift` is added to every representation (bias); it cancels exactly.
SampleEstimate sample_loss(const LossSpec& spec, const Dataset& ds, const AugmentationSpec& aug,
                           const Matrix& w, std::size_t mc_draws, std::uint64_t seed,
                           const std::vector<double>& shift = {});

/// Loss plus its analytic gradient in W on the same draws.
SampleEstimate sample_loss_grad(const LossSpec& spec, const Dataset& ds, const AugmentationSpec& aug,
                                const Matrix& w, std::size_t mc_draws, std::uint64_t seed);

/// Fixed augmentation draws, reusable across many evaluations.
struct DrawSet {
    std::vector<Matrix> first;   // x_i per draw, N x d0
    std::vector<Matrix> second;  // x'_i per draw
};

DrawSet make_draws(const Dataset& ds, const AugmentationSpec& aug, std::size_t mc_draws, std::uint64_t seed);

SampleEstimate sample_loss_on(const LossSpec& spec, const DrawSet& draws, const Matrix& w, bool with_grad,
                              const std::vector<double>& shift = {});

/// 1/8 Var[|W(x - chi)|^2] over pairs of independent augmented points
/// (x from point i, chi from point j != i).
struct VarianceEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

VarianceEstimate variance_quartic(const Dataset& ds, const AugmentationSpec& aug, const Matrix& w,
                                  std::size_t mc_draws, std::uint64_t seed);

/// Cumulant expansion of the sample loss on fixed draws:
///   delta = quadratic + quartic + O(|W|^6)
/// quadratic = E_i[u_ii] - beta E_i E_p[u_ij]   (equals -Tr[W B_emp W^T])
/// quartic   = beta/2 E_i Var_p[u_ij]           (anchor-conditional variance)
/// pooled_quartic = beta/2 Var_{i,p}[u_ij]      (unconditional variance)
struct ExpansionTerms {
    double delta = 0.0;
    double quadratic = 0.0;
    double quartic = 0.0;
    double pooled_quartic = 0.0;
};

ExpansionTerms expansion_terms(const LossSpec& spec, const DrawSet& draws, const Matrix& w);

} // namespace collapselab
