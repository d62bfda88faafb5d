#pragma once

// Stationary points of the quartic landscape, global minimum, per-mode
// collapse prediction, and the normalization and bias variants.

#include <optional>
#include <string>
#include <vector>

#include "collapselab/datamodel.hpp"
#include "collapselab/losses.hpp"
#include "collapselab/spectra.hpp"

namespace collapselab {

/// Joint eigenbasis of (A0, C, B) when they commute. Column i of `u` is mode
/// i; a, c, b, s are the mode's eigenvalues under A0, C, B and Sigma. When A0
/// and C are both diagonal the basis is the identity in axis order.
struct ModeBasis {
    Matrix u;
    std::vector<double> a, c, b, s;

    std::size_t dim() const noexcept { return b.size(); }
    /// b_i / s_i, the eigenvalues of Sigma^{-1} B.
    std::vector<double> lambda() const;
    /// U diag(g) U^T.
    SymMatrix assemble(const std::vector<double>& g) const;
};

/// True when A0, C and B can be diagonalized together.
bool commuting_instance(const LossSpec& spec, const CovarianceModel& cov);

/// Throws InvalidArgument when the instance does not commute.
ModeBasis mode_basis(const LossSpec& spec, const CovarianceModel& cov);

struct StationaryPoint {
    Mask mask;
    SymMatrix wtw;
    double loss_value = 0.0;
    bool is_local_min = false;
    std::size_t rank = 0;
};

/// Modes whose governing eigenvalue is at or below this count as collapsed.
double collapse_threshold(const SymMatrix& b);

/// Every stationary point, one per admissible mask (popcount <= min(d0, d1),
/// no non-positive mode selected), sorted by mask code. Commuting instances
/// use the mode basis; others use eigenmodes of Sigma^{-1/2} B Sigma^{-1/2}
/// sorted descending. Above 20 modes only the global-minimum mask, the empty
/// mask and the global mask with one mode removed are returned.
/// Throws SingularSigma when Sigma is not positive definite.
std::vector<StationaryPoint> stationary_points(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1);

/// Same enumeration, always through the Sigma^{-1/2} U M Lambda U^T Sigma^{-1/2}
/// route.
std::vector<StationaryPoint> stationary_points_general(const LossSpec& spec, const CovarianceModel& cov,
                                                       std::size_t d1);

StationaryPoint global_minimum(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1);

/// A d1 x d0 matrix W with W^T W = wtw (rank of wtw must not exceed d1).
Matrix lift(const SymMatrix& wtw, std::size_t d1);

// --- Collapse prediction ------------------------------------------------------

struct ModeVerdict {
    std::size_t mode = 0;
    double a = 0.0;  // NaN when the instance does not commute
    double c = 0.0;
    double b = 0.0;
    bool collapses = false;
    /// Governing inequality: the mode collapses iff lhs >= rhs. For the
    /// InfoNCE-type families lhs = a - b (the augmentation and weight-decay
    /// pull) and rhs = a; otherwise lhs = 0 and rhs = b.
    double lhs = 0.0;
    double rhs = 0.0;
    double threshold_quantity = 0.0;  // b
};

struct CollapseReport {
    std::vector<ModeVerdict> modes;
    bool commuting = false;
    bool complete_collapse = false;
    bool dimensional_collapse = false;

    std::size_t collapsed_count() const;
};

CollapseReport predict_collapse(const LossSpec& spec, const CovarianceModel& cov);

// --- Normalization ------------------------------------------------------------

struct NormalizedSolution {
    Mask mask;
    SymMatrix wtw;
    std::size_t d_m = 0;
    double rho = 0.0;
    bool feasible = false;
};

/// kappa -> inf limit for one mask. Per mode
///   g_i = (lambda_i + (2c - T)/d_M) / (2 s_i),  T = sum_M lambda_i.
/// Feasible iff every selected bracket is positive, i.e.
/// lambda_i + 2c/d_M > mean_M lambda. Throws EmptyMask.
NormalizedSolution normalized_limit(const LossSpec& spec, const CovarianceModel& cov, const Mask& mask);

/// Per-mode feasibility margins lambda_i + 2c/d_M - mean_M lambda.
std::vector<double> normalized_margins(const LossSpec& spec, const CovarianceModel& cov, const Mask& mask);

/// Lowest-loss kappa -> inf solution with at most d1 modes: the largest
/// feasible top-k set by lambda.
NormalizedSolution normalized_global_limit(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1);

/// Self-consistent stationary points at finite kappa. The origin is always a
/// candidate; when no mask passes, the origin alone is returned.
std::vector<NormalizedSolution> normalized_solution_finite_kappa(const LossSpec& spec, const CovarianceModel& cov,
                                                                 std::size_t d1);

/// Stationary point of the finite-kappa landscape for one mask (no filter).
NormalizedSolution normalized_solution_for_mask(const LossSpec& spec, const CovarianceModel& cov, const Mask& mask);

// --- Bias ---------------------------------------------------------------------

struct BiasSolution {
    StationaryPoint point;
    double rho = 0.0;
    double bias_norm_sq = 0.0;  // c - rho
};

struct BiasReport {
    std::vector<BiasSolution> solutions;
    std::size_t max_d_m = 0;
    /// Printed criterion: target c below lambda_i for every mode.
    bool complete_collapse_possible = false;
    /// Exact single-mode check: lambda_i / 2 > c for every mode with
    /// lambda_i > 0, so no nonzero solution fits under the norm.
    bool single_mode_infeasible = false;
};

BiasReport bias_constrained_solutions(const LossSpec& spec, const CovarianceModel& cov, std::size_t d1);

// --- Normalization collapse case analysis --------------------------------------

struct CaseResult {
    std::string name;
    std::vector<double> a, c;     // instance built for the case
    std::vector<double> margins;  // Eq.-13-style margins, full mask
    std::vector<bool> predicted_collapse;
    std::vector<bool> evaluated_collapse;
    bool pass = false;
};

struct AppendixCReport {
    std::vector<bool> given_collapse;  // full-mask verdicts on the input covariances
    CaseResult small_augmentation;
    CaseResult strong_single_mode;
    CaseResult weak_single_mode;
    double eps = 0.0;
    double exact_eps_threshold = 0.0;    // (a+c)(d-3)/(d-1) at target 1, general form below
    double printed_eps_threshold = 0.0;  // (a+c)(d-3)/(a+c+d)
    bool printed_inequality_agrees = false;
};

/// Uses B = A0 - C, so lambda_i = (a_i - c_i)/(a_i + c_i). Cases are built from
/// the eigenvalues of the given A0; `eps` sets a_1 - c_1 for the weak case.
AppendixCReport appendix_c_cases(const CovarianceModel& cov, double c, double eps = 0.1);

} // namespace collapselab
