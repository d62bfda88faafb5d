#pragma once

// Datasets, covariance triples and the augmentation / imbalance models that
// produce them.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "collapselab/spectra.hpp"

namespace collapselab {

/// (A0, C, Sigma = A0 + C). `commuting` caches commutes(a0, c, 1e-8).
struct CovarianceModel {
    SymMatrix a0;
    SymMatrix c;
    SymMatrix sigma;
    bool commuting = false;

    CovarianceModel() = default;
    CovarianceModel(SymMatrix a0_, SymMatrix c_);

    std::size_t dim() const noexcept { return a0.dim(); }
};

/// N x d0 points, one per row.
struct Dataset {
    Matrix points;

    Dataset() = default;
    explicit Dataset(Matrix pts);

    std::size_t n() const noexcept { return points.rows(); }
    std::size_t dim() const noexcept { return points.cols(); }
};

struct AugmentationSpec {
    enum class Kind { isotropic, diagonal, structured };

    Kind kind = Kind::isotropic;
    double sigma = 0.0;
    double theta = 0.5;
    std::vector<double> variances;

    static AugmentationSpec make_isotropic(double sigma);
    static AugmentationSpec make_diagonal(std::vector<double> variances);
    /// sigma^2 diag(1 - theta, theta) on two features.
    static AugmentationSpec make_structured(double sigma, double theta);

    void validate() const;
};

struct ImbalanceSpec {
    std::array<double, 2> proportions{0.5, 0.5};
    std::array<std::vector<double>, 2> class_means;
    std::array<SymMatrix, 2> class_covs;

    void validate() const;
};

/// Rows are i.i.d. N(0, cov), drawn as cov^{1/2} z. Throws InvalidCovariance
/// when cov is not PSD.
Dataset sample_gaussian(std::size_t dim, std::size_t n, const SymMatrix& cov, std::uint64_t seed);

/// Uncentered second moment (1/n) sum_i x_i x_i^T.
SymMatrix empirical_cov(const Dataset& ds);

SymMatrix augmentation_cov(const AugmentationSpec& spec, std::size_t dim);

/// Mixture second moment sum_k p_k (cov_k + mu_k mu_k^T).
SymMatrix imbalanced_cov(const ImbalanceSpec& spec);

/// Header x0..x{d-1}, one point per line.
void write_dataset_csv(const Dataset& ds, std::ostream& out);
Dataset read_dataset_csv(std::istream& in);

} // namespace collapselab
