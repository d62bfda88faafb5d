#pragma once

// Dense small-dimension linear algebra: general matrices, symmetric matrices,
// a cyclic Jacobi eigensolver, eigenvalue masks and spectral functions.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "collapselab/error.hpp"

namespace collapselab {

/// Row-major dense real matrix. Used for weights W (d1 x d0) and for
/// intermediate non-symmetric products.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix identity(std::size_t n);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transpose() const;
    double max_abs() const noexcept;
    double frobenius() const noexcept;
    bool all_finite() const noexcept;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator-(Matrix a);
Matrix matmul(const Matrix& a, const Matrix& b);

inline constexpr std::size_t kMaxSymDim = 512;

/// Symmetric square matrix. Construction from an arbitrary square matrix
/// stores (M + M^T)/2, so entries(i,j) == entries(j,i) holds bit-exactly.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t dim);
    explicit SymMatrix(const Matrix& m);

    static SymMatrix identity(std::size_t n);
    static SymMatrix zeros(std::size_t n) { return SymMatrix(n); }
    static SymMatrix diagonal(std::span<const double> d);
    static SymMatrix diagonal(std::initializer_list<double> d);
    static SymMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
    const Matrix& full() const noexcept { return m_; }

    /// Writes both (i,j) and (j,i).
    void set(std::size_t i, std::size_t j, double v) noexcept;

    double trace() const noexcept;
    double max_abs() const noexcept { return m_.max_abs(); }
    double frobenius() const noexcept { return m_.frobenius(); }
    std::vector<double> diag() const;
    bool is_diagonal(double tol = 0.0) const noexcept;

    SymMatrix& operator+=(const SymMatrix& other);
    SymMatrix& operator-=(const SymMatrix& other);
    SymMatrix& operator*=(double s) noexcept;

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    Matrix m_;
};

SymMatrix operator+(SymMatrix a, const SymMatrix& b);
SymMatrix operator-(SymMatrix a, const SymMatrix& b);
SymMatrix operator*(double s, SymMatrix a);
Matrix operator*(const SymMatrix& a, const SymMatrix& b);
Matrix operator*(const Matrix& a, const SymMatrix& b);
Matrix operator*(const SymMatrix& a, const Matrix& b);

/// X S X^T, symmetrized.
SymMatrix congruence(const Matrix& x, const SymMatrix& s);
/// W^T W for a d1 x d0 weight matrix.
SymMatrix gram(const Matrix& w);
/// Tr[A B] for symmetric A, B without forming the product.
double trace_product(const SymMatrix& a, const SymMatrix& b);

/// Eigenvalues sorted descending, with the matching orthonormal eigenvectors
/// stored as the columns of `vectors`.
struct SpectralPair {
    std::vector<double> values;
    Matrix vectors;

    std::size_t dim() const noexcept { return values.size(); }
    SymMatrix reconstruct() const;
};

/// 0/1 selection of eigenmodes.
struct Mask {
    std::vector<bool> bits;

    Mask() = default;
    explicit Mask(std::vector<bool> b) : bits(std::move(b)) {}

    static Mask none(std::size_t n) { return Mask(std::vector<bool>(n, false)); }
    static Mask ones(std::size_t n) { return Mask(std::vector<bool>(n, true)); }
    /// Bit i of `code` selects mode i.
    static Mask from_code(std::uint64_t code, std::size_t n);

    std::size_t size() const noexcept { return bits.size(); }
    std::size_t popcount() const noexcept;
    std::uint64_t code() const;
    bool operator[](std::size_t i) const { return bits[i]; }
    std::string to_string() const;

    friend bool operator==(const Mask&, const Mask&) = default;
};

/// Cyclic Jacobi eigendecomposition. Throws InvalidMatrix on non-finite input.
SpectralPair eig_sym(const SymMatrix& m);

/// U (M o Lambda) U^T. Throws DimensionError on length mismatch.
SymMatrix masked(const SpectralPair& pair, const Mask& mask);

/// U Lambda^p U^T. Negative powers need every eigenvalue above 1e-12
/// (SingularMatrix otherwise); fractional positive powers clamp round-off
/// negatives to zero and reject genuinely negative eigenvalues.
SymMatrix mat_pow(const SymMatrix& m, double p);
SymMatrix mat_pow(const SpectralPair& pair, double p);

/// ||AB - BA||_max <= tol * (1 + ||A||_F ||B||_F).
bool commutes(const SymMatrix& a, const SymMatrix& b, double tol);

bool is_psd(const SymMatrix& m, double tol = 1e-10);

/// Orthonormal basis that diagonalizes every matrix in `ms` simultaneously.
/// The matrices must pairwise commute. Degenerate eigenspaces of the first
/// matrix are refined by the later ones. Columns follow the descending order
/// of the first matrix, ties broken by the later matrices.
Matrix joint_eigenbasis(std::span<const SymMatrix> ms);

} // namespace collapselab
