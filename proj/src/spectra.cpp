#include "collapselab/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace collapselab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

double Matrix::max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double Matrix::frobenius() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) throw DimensionError("Matrix +=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) throw DimensionError("Matrix -=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }
Matrix operator-(Matrix a) { return a *= -1.0; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto bk = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

// --- SymMatrix ---------------------------------------------------------------

namespace {

void check_sym_dim(std::size_t n) {
    if (n > kMaxSymDim)
        throw DimensionError("SymMatrix: dimension " + std::to_string(n) + " exceeds " +
                             std::to_string(kMaxSymDim));
}

} // namespace

SymMatrix::SymMatrix(std::size_t dim) : m_(dim, dim) { check_sym_dim(dim); }

SymMatrix::SymMatrix(const Matrix& m) : m_(m.rows(), m.cols()) {
    if (m.rows() != m.cols()) throw DimensionError("SymMatrix: matrix is not square");
    check_sym_dim(m.rows());
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i) {
        m_(i, i) = m(i, i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m_(i, j) = v;
            m_(j, i) = v;
        }
    }
}

SymMatrix SymMatrix::identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }

SymMatrix SymMatrix::diagonal(std::span<const double> d) {
    SymMatrix s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s.m_(i, i) = d[i];
    return s;
}

SymMatrix SymMatrix::diagonal(std::initializer_list<double> d) {
    return diagonal(std::span<const double>(d.begin(), d.size()));
}

SymMatrix SymMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    return SymMatrix(Matrix::from_rows(rows));
}

void SymMatrix::set(std::size_t i, std::size_t j, double v) noexcept {
    m_(i, j) = v;
    m_(j, i) = v;
}

double SymMatrix::trace() const noexcept {
    double t = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) t += m_(i, i);
    return t;
}

std::vector<double> SymMatrix::diag() const {
    std::vector<double> d(dim());
    for (std::size_t i = 0; i < dim(); ++i) d[i] = m_(i, i);
    return d;
}

bool SymMatrix::is_diagonal(double tol) const noexcept {
    for (std::size_t i = 0; i < dim(); ++i)
        for (std::size_t j = i + 1; j < dim(); ++j)
            if (std::abs(m_(i, j)) > tol) return false;
    return true;
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& other) {
    m_ += other.m_;
    return *this;
}

SymMatrix& SymMatrix::operator-=(const SymMatrix& other) {
    m_ -= other.m_;
    return *this;
}

SymMatrix& SymMatrix::operator*=(double s) noexcept {
    m_ *= s;
    return *this;
}

SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
SymMatrix operator*(double s, SymMatrix a) { return a *= s; }
Matrix operator*(const SymMatrix& a, const SymMatrix& b) { return matmul(a.full(), b.full()); }
Matrix operator*(const Matrix& a, const SymMatrix& b) { return matmul(a, b.full()); }
Matrix operator*(const SymMatrix& a, const Matrix& b) { return matmul(a.full(), b); }

SymMatrix congruence(const Matrix& x, const SymMatrix& s) {
    return SymMatrix(matmul(matmul(x, s.full()), x.transpose()));
}

SymMatrix gram(const Matrix& w) {
    const std::size_t d0 = w.cols();
    SymMatrix g(d0);
    for (std::size_t i = 0; i < d0; ++i) {
        for (std::size_t j = i; j < d0; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < w.rows(); ++r) s += w(r, i) * w(r, j);
            g.set(i, j, s);
        }
    }
    return g;
}

double trace_product(const SymMatrix& a, const SymMatrix& b) {
    if (a.dim() != b.dim()) throw DimensionError("trace_product: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i)
        for (std::size_t j = 0; j < a.dim(); ++j) s += a(i, j) * b(j, i);
    return s;
}

// --- Mask --------------------------------------------------------------------

Mask Mask::from_code(std::uint64_t code, std::size_t n) {
    if (n > 64) throw DimensionError("Mask::from_code: more than 64 modes");
    std::vector<bool> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = ((code >> i) & 1U) != 0;
    return Mask(std::move(b));
}

std::size_t Mask::popcount() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
}

std::uint64_t Mask::code() const {
    if (bits.size() > 64) throw DimensionError("Mask::code: more than 64 modes");
    std::uint64_t c = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) c |= (std::uint64_t{1} << i);
    return c;
}

std::string Mask::to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (bool b : bits) s.push_back(b ? '1' : '0');
    return s;
}

// --- Eigendecomposition ------------------------------------------------------

SymMatrix SpectralPair::reconstruct() const {
    return masked(*this, Mask::ones(dim()));
}

SpectralPair eig_sym(const SymMatrix& m) {
    if (!m.full().all_finite()) throw InvalidMatrix("eig_sym: non-finite entries");
    const std::size_t n = m.dim();
    Matrix a = m.full();
    Matrix v = Matrix::identity(n);

    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        double on = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            on += a(i, i) * a(i, i);
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) off += a(i, j) * a(i, j);
        }
        if (off == 0.0 || std::sqrt(off) < 1e-12 * std::sqrt(on)) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e150) {
                    t = 0.5 / theta;
                } else {
                    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SpectralPair out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

SymMatrix masked(const SpectralPair& pair, const Mask& mask) {
    const std::size_t n = pair.dim();
    if (mask.size() != n) throw DimensionError("masked: mask length differs from dimension");
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        if (!mask[k]) continue;
        const double lam = pair.values[k];
        if (lam == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double ui = lam * pair.vectors(i, k);
            for (std::size_t j = 0; j < n; ++j) out(i, j) += ui * pair.vectors(j, k);
        }
    }
    return SymMatrix(out);
}

SymMatrix mat_pow(const SpectralPair& pair, double p) {
    const std::size_t n = pair.dim();
    double scale = 0.0;
    for (double v : pair.values) scale = std::max(scale, std::abs(v));
    const bool integral = std::floor(p) == p;

    SpectralPair powered = pair;
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = pair.values[k];
        if (p == 0.0) {
            powered.values[k] = 1.0;
        } else if (p < 0.0) {
            if (lam <= 1e-12)
                throw SingularMatrix("mat_pow: eigenvalue " + std::to_string(lam) +
                                     " too small for negative power");
            powered.values[k] = std::pow(lam, p);
        } else if (integral) {
            powered.values[k] = std::pow(lam, p);
        } else {
            if (lam < 0.0) {
                if (lam < -1e-10 * (1.0 + scale))
                    throw InvalidMatrix("mat_pow: negative eigenvalue under fractional power");
                powered.values[k] = 0.0;
            } else {
                powered.values[k] = std::pow(lam, p);
            }
        }
    }
    return masked(powered, Mask::ones(n));
}

SymMatrix mat_pow(const SymMatrix& m, double p) { return mat_pow(eig_sym(m), p); }

bool commutes(const SymMatrix& a, const SymMatrix& b, double tol) {
    if (a.dim() != b.dim()) throw DimensionError("commutes: dimension mismatch");
    const Matrix ab = a * b;
    const Matrix ba = b * a;
    return (ab - ba).max_abs() <= tol * (1.0 + a.frobenius() * b.frobenius());
}

bool is_psd(const SymMatrix& m, double tol) {
    const auto pair = eig_sym(m);
    double scale = 0.0;
    for (double v : pair.values) scale = std::max(scale, std::abs(v));
    return pair.values.empty() || pair.values.back() >= -tol * (1.0 + scale);
}

// --- Joint diagonalization ---------------------------------------------------

namespace {

// Columns of `basis` span an invariant subspace of every remaining matrix;
// rotate them so each remaining matrix is diagonal there.
Matrix refine(const Matrix& basis, std::span<const SymMatrix> ms) {
    const std::size_t k = basis.cols();
    if (ms.empty() || k <= 1) return basis;
    const Matrix bt = basis.transpose();
    const SymMatrix projected(matmul(matmul(bt, ms.front().full()), basis));
    const SpectralPair pair = eig_sym(projected);
    const Matrix rotated = matmul(basis, pair.vectors);

    double scale = 0.0;
    for (double v : pair.values) scale = std::max(scale, std::abs(v));
    const double tol = 1e-9 * (1.0 + scale);

    Matrix out(basis.rows(), k);
    std::size_t start = 0;
    while (start < k) {
        std::size_t end = start + 1;
        while (end < k && std::abs(pair.values[end - 1] - pair.values[end]) <= tol) ++end;
        Matrix block(basis.rows(), end - start);
        for (std::size_t r = 0; r < basis.rows(); ++r)
            for (std::size_t c = start; c < end; ++c) block(r, c - start) = rotated(r, c);
        const Matrix refined = refine(block, ms.subspan(1));
        for (std::size_t r = 0; r < basis.rows(); ++r)
            for (std::size_t c = start; c < end; ++c) out(r, c) = refined(r, c - start);
        start = end;
    }
    return out;
}

} // namespace

Matrix joint_eigenbasis(std::span<const SymMatrix> ms) {
    if (ms.empty()) throw InvalidArgument("joint_eigenbasis: no matrices");
    const std::size_t n = ms.front().dim();
    for (const auto& m : ms)
        if (m.dim() != n) throw DimensionError("joint_eigenbasis: dimension mismatch");
    return refine(Matrix::identity(n), ms);
}

} // namespace collapselab
