#include "tsa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tsa/errors.hpp"

namespace tsa {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* where) {
    if (a != b) {
        throw DimensionError(std::string(where) + ": dimension mismatch (" + std::to_string(a) +
                             " vs " + std::to_string(b) + ")");
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(where) + ": shape mismatch");
    }
}

// Plain Cholesky-Banachiewicz; returns false on a non-positive pivot.
bool try_cholesky(const Matrix& s, double jitter, Matrix& out) {
    const std::size_t n = s.rows();
    out = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = s(i, j) + (i == j ? jitter : 0.0);
            for (std::size_t k = 0; k < j; ++k) sum -= out(i, k) * out(j, k);
            if (i == j) {
                if (!(sum > 0.0)) return false;
                out(i, i) = std::sqrt(sum);
            } else {
                out(i, j) = sum / out(j, j);
            }
        }
    }
    return true;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Vector subtract(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "subtract");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
    require_same_dim(m.cols(), x.size(), "matvec");
    Vector out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), x);
    return out;
}

double quadratic_form(const Matrix& m, std::span<const double> x) {
    if (m.rows() != m.cols()) throw DimensionError("quadratic_form: matrix not square");
    return dot(x, matvec(m, x));
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require_same_dim(a.cols(), b.rows(), "matmul");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    require_same_dim(a.cols(), b.cols(), "matmul_transposed");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

void add_outer(Matrix& m, std::span<const double> x, std::span<const double> y, double alpha) {
    require_same_dim(m.rows(), x.size(), "add_outer");
    require_same_dim(m.cols(), y.size(), "add_outer");
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double ax = alpha * x[i];
        for (std::size_t j = 0; j < y.size(); ++j) m(i, j) += ax * y[j];
    }
}

double frobenius_norm(const Matrix& m) { return norm2(m.data()); }

double frobenius_distance(const Matrix& a, const Matrix& b) {
    return frobenius_norm(subtract(a, b));
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector mean(std::span<const Vector> samples) {
    if (samples.empty()) throw EmptyClass("mean: empty sample set");
    const std::size_t dim = samples.front().size();
    Vector out(dim, 0.0);
    for (const auto& s : samples) {
        require_same_dim(s.size(), dim, "mean");
        for (std::size_t i = 0; i < dim; ++i) out[i] += s[i];
    }
    const double n = static_cast<double>(samples.size());
    for (double& v : out) v /= n;
    return out;
}

Matrix covariance(std::span<const Vector> samples, std::span<const double> center) {
    if (samples.empty()) throw EmptyClass("covariance: empty sample set");
    const std::size_t dim = center.size();
    Matrix out(dim, dim);
    Vector diff(dim);
    for (const auto& s : samples) {
        require_same_dim(s.size(), dim, "covariance");
        for (std::size_t i = 0; i < dim; ++i) diff[i] = s[i] - center[i];
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = i; j < dim; ++j) out(i, j) += diff[i] * diff[j];
    }
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = i; j < dim; ++j) {
            out(i, j) /= n;
            out(j, i) = out(i, j);
        }
    }
    return out;
}

Matrix cholesky(const Matrix& s, double jitter) {
    if (s.rows() != s.cols()) throw DimensionError("cholesky: matrix not square");
    const std::size_t n = s.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(s(i, j) - s(j, i)) > 1e-10) {
                throw DimensionError("cholesky: matrix not symmetric");
            }
        }
    }
    constexpr double kMaxJitter = 1e-4;
    Matrix out;
    double j = jitter;
    while (true) {
        if (try_cholesky(s, j, out)) return out;
        const double next = j > 0.0 ? j * 10.0 : 1e-10;
        if (next > kMaxJitter * (1.0 + 1e-12)) break;
        j = next;
    }
    throw SingularCovariance("cholesky: matrix not positive definite with jitter up to 1e-4");
}

Vector sample_mvn(std::span<const double> mean, const Matrix& chol, Rng& rng) {
    require_same_dim(chol.rows(), mean.size(), "sample_mvn");
    require_same_dim(chol.cols(), mean.size(), "sample_mvn");
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(mean.size());
    for (double& v : z) v = normal(rng);
    Vector out(mean.begin(), mean.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        // chol is lower-triangular; the full row is used so a caller may pass
        // any square root of the covariance.
        out[i] += dot(chol.row(i), z);
    }
    return out;
}

Vector symmetric_eigenvalues(const Matrix& s) {
    if (s.rows() != s.cols()) throw DimensionError("symmetric_eigenvalues: matrix not square");
    const std::size_t n = s.rows();
    Matrix a = s;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
            }
        }
    }
    Vector eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

}  // namespace tsa
