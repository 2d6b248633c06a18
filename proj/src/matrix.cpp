#include "ipl/matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace ipl {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Vector Matrix::col(std::size_t j) const {
    require(j < cols, "Matrix::col: index " + std::to_string(j) + " out of range");
    Vector v(rows);
    for (std::size_t r = 0; r < rows; ++r) v[r] = (*this)(r, j);
    return v;
}

void Matrix::set_col(std::size_t j, const Vector& v) {
    require(j < cols && v.size() == rows, "Matrix::set_col: shape mismatch");
    for (std::size_t r = 0; r < rows; ++r) (*this)(r, j) = v[r];
}

Vector Matrix::row(std::size_t r) const {
    require(r < rows, "Matrix::row: index out of range");
    return Vector(data.begin() + static_cast<std::ptrdiff_t>(r * cols),
                  data.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
}

bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

Matrix& add_inplace(Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
    return a;
}

Matrix& axpy_inplace(Matrix& a, double alpha, const Matrix& b) {
    require(a.same_shape(b), "axpy_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += alpha * b.data[i];
    return a;
}

Matrix scaled(const Matrix& a, double alpha) {
    Matrix out = a;
    for (double& x : out.data) x *= alpha;
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < a.cols; ++c) out(c, r) = a(r, c);
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions disagree");
    Matrix out(a.rows, b.cols);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double arc = a(r, k);
            if (arc == 0.0) continue;
            for (std::size_t c = 0; c < b.cols; ++c) out(r, c) += arc * b(k, c);
        }
    return out;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "matmul_at_b: shared dimension disagrees");
    Matrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k)
        for (std::size_t r = 0; r < a.cols; ++r) {
            const double akr = a(k, r);
            if (akr == 0.0) continue;
            for (std::size_t c = 0; c < b.cols; ++c) out(r, c) += akr * b(k, c);
        }
    return out;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    require(a.cols == b.cols, "matmul_a_bt: shared dimension disagrees");
    Matrix out(a.rows, b.rows);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t c = 0; c < b.rows; ++c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += a(r, k) * b(c, k);
            out(r, c) = acc;
        }
    return out;
}

double dot(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

double col_dot(const Matrix& m, std::size_t j, const Matrix& o, std::size_t k) {
    require(m.rows == o.rows, "col_dot: row counts disagree");
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) acc += m(r, j) * o(r, k);
    return acc;
}

double col_norm(const Matrix& m, std::size_t j) { return std::sqrt(col_dot(m, j, m, j)); }

bool all_finite(const Matrix& m) {
    return std::all_of(m.data.begin(), m.data.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Vector& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(const Matrix& m, const std::string& what) {
    if (!all_finite(m)) fail(what + ": non-finite entry");
}

void require_finite(const Vector& v, const std::string& what) {
    if (!all_finite(v)) fail(what + ": non-finite entry");
}

ColumnNormalizeResult l2_normalize_columns(const Matrix& m, double epsilon) {
    require(epsilon > 0.0, "l2_normalize_columns: epsilon must be positive");
    require_finite(m, "l2_normalize_columns: input");
    ColumnNormalizeResult out{m, {}};
    for (std::size_t j = 0; j < m.cols; ++j) {
        const double n = col_norm(m, j);
        if (n < epsilon) {
            out.skipped.push_back(j);
            continue;
        }
        for (std::size_t r = 0; r < m.rows; ++r) out.matrix(r, j) = m(r, j) / n;
    }
    return out;
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "cosine_matrix: column dimensions disagree");
    auto norms_of = [](const Matrix& m, const char* name) {
        Vector n(m.cols);
        for (std::size_t j = 0; j < m.cols; ++j) {
            n[j] = col_norm(m, j);
            if (!(n[j] > 1e-300))
                fail(std::string("cosine_matrix: zero-norm column ") + std::to_string(j) +
                     " in " + name);
        }
        return n;
    };
    const Vector na = norms_of(a, "a");
    const Vector nb = norms_of(b, "b");
    Matrix out(a.cols, b.cols);
    for (std::size_t i = 0; i < a.cols; ++i)
        for (std::size_t j = 0; j < b.cols; ++j)
            out(i, j) = col_dot(a, i, b, j) / (na[i] * nb[j]);
    return out;
}

double log_sum_exp(const Vector& v) {
    require(!v.empty(), "log_sum_exp: empty vector");
    const double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

SymmetricEigen symmetric_eigen(const Matrix& s) {
    require(s.rows == s.cols, "symmetric_eigen: matrix not square");
    const std::size_t n = s.rows;
    Matrix a = s;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double fro2 = 0.0;
    for (double x : s.data) fro2 += x * x;
    const double off_tol = 1e-30 * std::max(fro2, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < off_tol) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

Pca2d pca_2d(const Matrix& points) {
    require(points.rows >= 3, "pca_2d: need at least 3 points");
    require(points.cols >= 2, "pca_2d: need dimension >= 2");
    require_finite(points, "pca_2d: input");

    const std::size_t n = points.rows, d = points.cols;
    Vector mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += points(i, j);
    for (double& m : mean) m /= static_cast<double>(n);

    Matrix centered(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = points(i, j) - mean[j];

    const Matrix scatter = matmul_at_b(centered, centered);
    SymmetricEigen eig = symmetric_eigen(scatter);

    const double scale = std::max(std::abs(eig.values[0]), 1.0);
    auto axis = [&](std::size_t k) {
        Vector dir = eig.vectors.col(k);
        std::size_t imax = 0;
        for (std::size_t i = 1; i < d; ++i)
            if (std::abs(dir[i]) > std::abs(dir[imax])) imax = i;
        if (dir[imax] < 0.0)
            for (double& x : dir) x = -x;
        return dir;
    };

    Pca2d out{Matrix(n, 2), false};
    const double tol = 1e-12 * scale;
    if (eig.values[0] > tol) {
        const Vector a0 = axis(0);
        for (std::size_t i = 0; i < n; ++i) out.coords(i, 0) = dot(centered.row(i), a0);
    } else {
        out.rank_deficient = true;
    }
    if (eig.values[1] > tol) {
        const Vector a1 = axis(1);
        for (std::size_t i = 0; i < n; ++i) out.coords(i, 1) = dot(centered.row(i), a1);
    } else {
        out.rank_deficient = true;
    }
    return out;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h) {
    require(h > 0.0, "finite_diff_grad: h must be positive");
    Vector grad(x.size());
    Vector probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            fail("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::uint64_t mix_stream(std::uint64_t seed, std::uint64_t stream) {
    return seed ^ splitmix64(stream + 0x6a09e667f3bcc909ULL);
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : engine_(splitmix64(mix_stream(seed, stream))) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(6.283185307179586476925286766559 * v);
}

std::size_t Rng::index(std::size_t n) {
    require(n > 0, "Rng::index: n must be positive");
    // rejection sampling keeps the draw unbiased
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

}  // namespace ipl
