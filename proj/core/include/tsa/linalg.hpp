#pragma once

// Dense row-major matrices and plain vectors of doubles. Only what the
// loss, statistics and oracle code need: products, outer-product
// accumulation, population covariance, Cholesky and Gaussian draws.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace tsa {

using Vector = std::vector<double>;

// Every stochastic routine takes one of these explicitly.
using Rng = std::mt19937_64;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// a - b, element-wise.
Vector subtract(std::span<const double> a, std::span<const double> b);

// M * x
Vector matvec(const Matrix& m, std::span<const double> x);

// x^T M x
double quadratic_form(const Matrix& m, std::span<const double> x);

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);

// a * b^T; rows of the result are computed independently of each other, so
// a row's value does not depend on what other rows are in the batch.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// m += alpha * x y^T
void add_outer(Matrix& m, std::span<const double> x, std::span<const double> y, double alpha);

double frobenius_norm(const Matrix& m);
double frobenius_distance(const Matrix& a, const Matrix& b);

bool all_finite(std::span<const double> v);

// Component-wise mean. Throws EmptyClass on an empty sequence.
Vector mean(std::span<const Vector> samples);

// Population covariance (1/n) sum (x - center)(x - center)^T. The result is
// exactly symmetric: the upper triangle is computed and mirrored.
Matrix covariance(std::span<const Vector> samples, std::span<const double> center);

// Lower-triangular L with L L^T = s + jitter I. When the factorisation
// fails the jitter is escalated by factors of ten up to 1e-4 before giving
// up with SingularCovariance.
Matrix cholesky(const Matrix& s, double jitter);

// mean + chol * z, z ~ N(0, I).
Vector sample_mvn(std::span<const double> mean, const Matrix& chol, Rng& rng);

// Eigenvalues of a symmetric matrix, ascending (cyclic Jacobi).
Vector symmetric_eigenvalues(const Matrix& s);

}  // namespace tsa
