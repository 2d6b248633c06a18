#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace ipl {

using Vector = std::vector<double>;

/// Dense row-major double-precision matrix. Columns are the semantic unit
/// throughout this project: a d-by-n prototype matrix holds one identity
/// per column.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }

    Vector col(std::size_t j) const;
    void set_col(std::size_t j, const Vector& v);
    Vector row(std::size_t r) const;

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

bool operator==(const Matrix& a, const Matrix& b);

// Element-wise arithmetic. Shapes must match.
Matrix& add_inplace(Matrix& a, const Matrix& b);
Matrix& axpy_inplace(Matrix& a, double alpha, const Matrix& b);  // a += alpha*b
Matrix scaled(const Matrix& a, double alpha);

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);          // a * b
Matrix matmul_at_b(const Matrix& a, const Matrix& b);     // a^T * b
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);     // a * b^T

double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);
double col_dot(const Matrix& m, std::size_t j, const Matrix& o, std::size_t k);
double col_norm(const Matrix& m, std::size_t j);

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);
// Throws std::invalid_argument naming `what` if any entry is non-finite.
void require_finite(const Matrix& m, const std::string& what);
void require_finite(const Vector& v, const std::string& what);

struct ColumnNormalizeResult {
    Matrix matrix;
    std::vector<std::size_t> skipped;  // columns with norm < epsilon, left unchanged
};

/// Scales every column to unit Euclidean norm. Columns whose norm falls
/// below `epsilon` are passed through unchanged and reported in `skipped`.
ColumnNormalizeResult l2_normalize_columns(const Matrix& m, double epsilon = 1e-12);

/// cosine(a.col(i), b.col(j)) for all column pairs; a.rows must equal b.rows.
/// A column with (near-)zero norm is an error naming the offending column.
Matrix cosine_matrix(const Matrix& a, const Matrix& b);

/// max(v) + log(sum(exp(v - max))); stable for entries up to +-1e4.
double log_sum_exp(const Vector& v);

struct SymmetricEigen {
    Vector values;   // descending
    Matrix vectors;  // column k pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymmetricEigen symmetric_eigen(const Matrix& s);

struct Pca2d {
    Matrix coords;        // one point per row, 2 columns
    bool rank_deficient;  // fewer than 2 nonzero covariance eigenvalues
};

/// Mean-centered projection of row-points onto the top-2 principal
/// directions. Sign convention: the largest-magnitude loading of each
/// direction is positive. With fewer than 2 nonzero eigenvalues the
/// trailing axis is all zeros and rank_deficient is set.
Pca2d pca_2d(const Matrix& points);

/// Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
/// A non-finite evaluation of f is an error identifying the coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& x, double h);

/// Shortest decimal string that round-trips the exact double (std::to_chars).
std::string format_double(double v);

/// Folds a stream id into a seed; Rng(seed, stream) == Rng(mix_stream(seed, stream)).
std::uint64_t mix_stream(std::uint64_t seed, std::uint64_t stream);

/// Deterministic RNG. Uniform deviates come straight from mt19937_64 (fixed
/// by the standard); gaussians use Box-Muller on those deviates so draws do
/// not depend on the standard library's distribution internals.
class Rng {
  public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t seed, std::uint64_t stream);  // independent per-stream sequence

    std::uint64_t next_u64();
    double uniform();                  // [0, 1)
    double gaussian();                 // standard normal
    std::size_t index(std::size_t n);  // uniform in [0, n)

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace ipl
