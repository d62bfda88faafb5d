#pragma once

#include <cstdint>

#include "collapselab/datamodel.hpp"
#include "collapselab/losses.hpp"
#include "collapselab/rng.hpp"
#include "collapselab/spectra.hpp"

namespace testing_helpers {

using namespace collapselab;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
    Philox rng(seed);
    Matrix m(r, c);
    for (double& v : m.data()) v = scale * rng.normal();
    return m;
}

inline Matrix random_orthogonal(std::size_t n, std::uint64_t seed) {
    return eig_sym(SymMatrix(matmul(random_matrix(n, n, seed), random_matrix(n, n, seed + 1).transpose()) +
                             random_matrix(n, n, seed + 2)))
        .vectors;
}

inline SymMatrix random_psd(std::size_t n, std::uint64_t seed, double ridge = 0.1) {
    const Matrix x = random_matrix(n, n, seed);
    return SymMatrix(matmul(x, x.transpose())) + ridge * SymMatrix::identity(n);
}

/// A0 and C sharing the eigenvectors of a random rotation.
inline CovarianceModel random_commuting(std::size_t n, std::uint64_t seed, bool rotate = true) {
    Philox rng(seed);
    std::vector<double> a(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = 0.2 + 2.0 * rng.uniform();
        c[i] = 3.0 * rng.uniform();
    }
    if (!rotate) return CovarianceModel(SymMatrix::diagonal(a), SymMatrix::diagonal(c));
    const Matrix q = random_orthogonal(n, seed + 100);
    return CovarianceModel(congruence(q, SymMatrix::diagonal(a)), congruence(q, SymMatrix::diagonal(c)));
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
    return (a - b).max_abs() / std::max(1e-300, std::max(a.max_abs(), b.max_abs()));
}

/// Central differences of the effective loss in every entry of W.
inline Matrix fd_grad(const LossSpec& spec, const CovarianceModel& cov, const Matrix& w, double h = 1e-5) {
    Matrix g(w.rows(), w.cols());
    for (std::size_t k = 0; k < w.data().size(); ++k) {
        Matrix p = w, m = w;
        p.data()[k] += h;
        m.data()[k] -= h;
        g.data()[k] = (effective_loss(spec, cov, p) - effective_loss(spec, cov, m)) / (2.0 * h);
    }
    return g;
}

} // namespace testing_helpers
