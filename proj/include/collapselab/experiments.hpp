#pragma once

// Scripted sweeps over the analytic theory and the trainer. Each returns a
// SweepGrid plus a few scalar summaries and a plotting hint.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "collapselab/datamodel.hpp"
#include "collapselab/grid.hpp"
#include "collapselab/losses.hpp"
#include "collapselab/solver.hpp"
#include "collapselab/trainer.hpp"

namespace collapselab {

enum class SweepMode { analytic, trained };

std::string mode_name(SweepMode m);
SweepMode parse_mode(const std::string& s);

struct PlotHint {
    enum class Kind { lines, heatmap };
    Kind kind = Kind::lines;
    std::vector<std::string> keys;  // lines: one polyline per key; heatmap: first key
    bool log_x = false;
    bool log_y = false;
    std::string title;
};

struct ExperimentResult {
    SweepGrid grid;
    std::vector<std::pair<std::string, double>> summary;
    std::vector<std::pair<std::string, std::string>> notes;
    PlotHint plot;

    double summary_value(const std::string& name) const;
};

/// Largest principal angle between span(qa) and span(qb), computed from the
/// sine so that tiny angles keep full precision. Columns must be orthonormal.
double largest_principal_angle(const Matrix& qa, const Matrix& qb);

/// Least-squares slope of log|y| against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Mode-basis diagonal of W^T W: entry i is u_i^T W^T W u_i.
std::vector<double> mode_values(const ModeBasis& basis, const SymMatrix& wtw);

/// Empirical covariance of `n` draws from N(0, I_d): a Marchenko-Pastur-like
/// clean covariance.
SymMatrix sampled_identity_cov(std::size_t d, std::size_t n, std::uint64_t seed);

// --- sigma_scaling ---------------------------------------------------------

struct SigmaScalingParams {
    SymMatrix a0;
    std::vector<double> sigmas;
    SweepMode mode = SweepMode::analytic;
    TrainConfig train;
};

/// InfoNCE with isotropic augmentation sigma^2 I. Columns: the three smallest
/// eigenvalues of W^T W, the matching closed-form values a/(2(a+sigma^2)^2),
/// and their largest absolute difference. Summary: slope of the smallest
/// eigenvalue over the top decade of sigma.
ExperimentResult sigma_scaling(const SigmaScalingParams& p);

// --- critical_n_sweep ------------------------------------------------------

struct CriticalNParams {
    double alpha = 0.1;
    double sigma = 5.0;
    std::vector<double> a = {1.0, 1.0, 1.0, 1.0};
    std::vector<double> ns;
    SweepMode mode = SweepMode::analytic;
    TrainConfig train;
    std::size_t mc_draws = 4;
    std::uint64_t seed = 0;
};

/// Weighted InfoNCE at A0 = diag(a), C = sigma^2 I, per dataset size N.
/// Trained mode fits the sample loss on N Gaussian points whose empirical
/// second moment is rescaled to exactly diag(a).
ExperimentResult critical_n_sweep(const CriticalNParams& p);

// --- beta_collapse_sweep ---------------------------------------------------

struct BetaSweepParams {
    std::vector<double> a = {1, 1, 1, 1, 1};
    std::vector<double> c = {0, 1, 2, 4, 8};
    std::vector<double> betas;
    std::vector<double> sigmas = {1.0};  // C = sigma^2 diag(c)
    SweepMode mode = SweepMode::analytic;
    TrainConfig train;
};

ExperimentResult beta_collapse_sweep(const BetaSweepParams& p);

// --- normalization_collapse -------------------------------------------------

struct NormalizationParams {
    SymMatrix a0;
    double target = 1.0;
    std::vector<double> sigmas;
    LossSpec base = LossSpec::infonce();
    SweepMode mode = SweepMode::analytic;
    double trained_kappa = 1e3;
    TrainConfig train;
};

/// kappa -> inf solution per sigma (largest feasible top-k mode set), its
/// three smallest W^T W eigenvalues, and the unnormalized minimum for
/// comparison.
ExperimentResult normalization_collapse(const NormalizationParams& p);

// --- phase_diagram -----------------------------------------------------------

struct PhaseParams {
    double a1 = 1.0;
    double a2 = 1.0;
    double beta = 0.5;
    std::vector<double> sigmas;
    std::vector<double> thetas;
};

/// Pattern codes: 0 none, 1 mode-1 only, 2 mode-2 only, 3 complete.
std::string pattern_label(int code);

ExperimentResult phase_diagram(const PhaseParams& p);

// --- downstream_eval ---------------------------------------------------------

struct DownstreamParams {
    double a1 = 1.0;
    double a2 = 1.0;
    double target_coeff = 1.0;  // y = target_coeff * x1
    double ridge = 1e-3;
    double beta = 0.5;
    std::size_t n_train = 2048;
    std::size_t n_test = 2048;
    std::uint64_t seed = 0;
    std::vector<double> sigmas;
    std::vector<double> thetas = {0.5, 1.0};
    SweepMode mode = SweepMode::analytic;
    TrainConfig train;
};

/// Ridge solution G = (Z^T Z / n + ridge I)^{-1} Z^T y / n.
std::vector<double> ridge_fit(const Matrix& z, const std::vector<double>& y, double ridge);

ExperimentResult downstream_eval(const DownstreamParams& p);

// --- imbalance_robustness ------------------------------------------------------

struct ImbalanceParams {
    std::vector<double> proportions;
    std::array<std::vector<double>, 2> means = {std::vector<double>{2.0, 0.5, 0.0},
                                                std::vector<double>{0.5, 2.0, 0.0}};
    double class_var = 0.3;
    std::vector<double> c = {1.0, 0.5, 0.2};
};

/// Top-k subspace of the selected quadratic form Sigma W^T W Sigma (= B_M / 2)
/// at proportion p versus p = 0.5, for InfoNCE and spectral contrastive.
/// k counts modes of B at p = 0.5 above half the largest. Raw W^T W angles
/// are reported alongside.
ExperimentResult imbalance_robustness(const ImbalanceParams& p);

// --- landscape_slice -----------------------------------------------------------

struct SliceParams {
    LossSpec spec;
    CovarianceModel cov;
    std::size_t d1 = 0;  // 0 means d0
    bool two_d = true;
    std::vector<double> values;  // scale grid, must contain 0
};

/// 0 local max, 1 saddle, 2 local min, 3 undetermined (flat).
std::string origin_label(int code);

/// Reference direction per mode: sqrt(|b_i| / 2) / s_i along u_i, which is
/// the global minimum wherever b_i > 0. The 2d slice scales the larger half
/// of modes (by lambda) with r1 and the rest with r2.
ExperimentResult landscape_slice(const SliceParams& p);

} // namespace collapselab
