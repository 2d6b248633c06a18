#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <string>

#include "doctest.h"
#include "ipl/matrix.hpp"

using namespace ipl;

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.gaussian();
    return m;
}

template <class F>
std::string thrown_message(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST_CASE("matmul matches a hand-computed product") {
    Matrix a(2, 3);
    a.data = {1, 2, 3, 4, 5, 6};
    Matrix b(3, 2);
    b.data = {7, 8, 9, 10, 11, 12};
    const Matrix c = matmul(a, b);
    CHECK(c.rows == 2);
    CHECK(c.cols == 2);
    CHECK(c(0, 0) == 58.0);
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);
}

TEST_CASE("transposed-product helpers agree with explicit transposes") {
    Rng rng(11);
    const Matrix a = random_matrix(rng, 4, 3);
    const Matrix b = random_matrix(rng, 4, 5);
    const Matrix c = random_matrix(rng, 6, 3);
    CHECK(max_abs_diff(matmul_at_b(a, b), matmul(transpose(a), b)) < 1e-12);
    CHECK(max_abs_diff(matmul_a_bt(a, c), matmul(a, transpose(c))) < 1e-12);
    CHECK(transpose(transpose(a)) == a);
}

TEST_CASE("matmul rejects mismatched shapes") {
    Matrix a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(add_inplace(a, Matrix(3, 2)), std::invalid_argument);
}

TEST_CASE("l2_normalize_columns produces unit columns and flags tiny ones") {
    Rng rng(3);
    Matrix m = random_matrix(rng, 5, 4);
    // make column 2 tiny
    for (std::size_t r = 0; r < m.rows; ++r) m(r, 2) = 1e-15;
    const auto res = l2_normalize_columns(m, 1e-12);
    REQUIRE(res.skipped == std::vector<std::size_t>{2});
    for (std::size_t j = 0; j < m.cols; ++j) {
        if (j == 2) {
            // below-threshold column passes through unchanged
            for (std::size_t r = 0; r < m.rows; ++r) CHECK(res.matrix(r, j) == m(r, j));
        } else {
            CHECK(std::abs(col_norm(res.matrix, j) - 1.0) < 1e-12);
        }
    }
    CHECK_THROWS_AS(l2_normalize_columns(m, 0.0), std::invalid_argument);
}

TEST_CASE("cosine_matrix gram is symmetric with unit diagonal and nonnegative spectrum") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix w = random_matrix(rng, 6, 5);
        const Matrix c = cosine_matrix(w, w);
        REQUIRE(c.rows == 5);
        REQUIRE(c.cols == 5);
        for (std::size_t i = 0; i < c.rows; ++i) {
            CHECK(std::abs(c(i, i) - 1.0) < 1e-12);
            for (std::size_t j = 0; j < c.cols; ++j) CHECK(c(i, j) == c(j, i));
        }
        // positive semidefiniteness probed through random quadratic forms,
        // independent of any eigensolver
        for (int probe = 0; probe < 50; ++probe) {
            Vector v(c.rows);
            for (double& x : v) x = rng.gaussian();
            double quad = 0.0;
            for (std::size_t i = 0; i < c.rows; ++i)
                for (std::size_t j = 0; j < c.cols; ++j) quad += v[i] * c(i, j) * v[j];
            CHECK(quad >= -1e-9 * dot(v, v));
        }
    }
}

TEST_CASE("cosine is invariant to rescaling a column") {
    Rng rng(9);
    Matrix w = random_matrix(rng, 8, 4);
    const Matrix before = cosine_matrix(w, w);
    for (std::size_t r = 0; r < w.rows; ++r) w(r, 1) *= 7.25;
    const Matrix after = cosine_matrix(w, w);
    CHECK(max_abs_diff(before, after) < 1e-12);
}

TEST_CASE("cosine_matrix names the zero-norm column") {
    Matrix a(3, 2);
    a(0, 0) = 1.0;  // column 1 stays zero
    const std::string msg = thrown_message([&] { cosine_matrix(a, a); });
    CHECK(msg.find("zero-norm column 1") != std::string::npos);
    CHECK(msg.find("in a") != std::string::npos);

    Matrix b(3, 1);
    b(0, 0) = 1.0;
    Matrix zero(3, 1);
    const std::string msg2 = thrown_message([&] { cosine_matrix(b, zero); });
    CHECK(msg2.find("zero-norm column 0") != std::string::npos);
    CHECK(msg2.find("in b") != std::string::npos);
}

TEST_CASE("log_sum_exp obeys the shift identity at large magnitude") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        Vector v(6);
        for (double& x : v) x = 64.0 * rng.gaussian();
        const double m = *std::max_element(v.begin(), v.end());
        Vector shifted = v;
        for (double& x : shifted) x -= m;
        CHECK(std::abs(log_sum_exp(v) - (log_sum_exp(shifted) + m)) < 1e-12);
        CHECK(std::isfinite(log_sum_exp(v)));
    }
    // would overflow a naive sum of exps
    CHECK(std::abs(log_sum_exp({1000.0, 1000.0}) - (1000.0 + std::log(2.0))) < 1e-9);
    CHECK(log_sum_exp({3.5}) == doctest::Approx(3.5).epsilon(1e-15));
    CHECK_THROWS_AS(log_sum_exp({}), std::invalid_argument);
}

TEST_CASE("symmetric_eigen reproduces an analytic 2x2 decomposition") {
    Matrix a(2, 2);
    a.data = {2, 1, 1, 2};
    const SymmetricEigen eig = symmetric_eigen(a);
    CHECK(eig.values[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(eig.values[1] == doctest::Approx(1.0).epsilon(1e-12));
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(std::abs(eig.vectors(0, 0)) - inv_sqrt2) < 1e-10);
    CHECK(std::abs(std::abs(eig.vectors(1, 0)) - inv_sqrt2) < 1e-10);
}

TEST_CASE("symmetric_eigen reconstructs random symmetric matrices") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix g = random_matrix(rng, 6, 6);
        Matrix a(6, 6);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) a(i, j) = 0.5 * (g(i, j) + g(j, i));
        const SymmetricEigen eig = symmetric_eigen(a);

        double scale = 0.0;
        for (double x : a.data) scale = std::max(scale, std::abs(x));
        // descending order
        for (std::size_t k = 0; k + 1 < eig.values.size(); ++k)
            CHECK(eig.values[k] >= eig.values[k + 1]);
        // V orthonormal
        const Matrix vtv = matmul_at_b(eig.vectors, eig.vectors);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j)
                CHECK(std::abs(vtv(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
        // V diag(values) V^T == A
        Matrix vl = eig.vectors;
        for (std::size_t r = 0; r < 6; ++r)
            for (std::size_t c = 0; c < 6; ++c) vl(r, c) *= eig.values[c];
        CHECK(max_abs_diff(matmul_a_bt(vl, eig.vectors), a) < 1e-9 * std::max(scale, 1.0));
        // trace preserved
        double trace = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < 6; ++i) trace += a(i, i);
        for (double v : eig.values) sum += v;
        CHECK(std::abs(trace - sum) < 1e-9 * std::max(scale, 1.0));
    }
}

TEST_CASE("pca_2d recovers planar structure exactly") {
    // points living in a 2d plane embedded in 6d: the projection must
    // preserve every pairwise distance
    Rng rng(21);
    Vector u(6), w(6);
    for (double& x : u) x = rng.gaussian();
    double nu = norm(u);
    for (double& x : u) x /= nu;
    for (double& x : w) x = rng.gaussian();
    const double uw = dot(u, w);
    for (std::size_t i = 0; i < 6; ++i) w[i] -= uw * u[i];
    double nw = norm(w);
    for (double& x : w) x /= nw;

    const std::size_t n = 12;
    Matrix points(n, 6);
    std::vector<std::pair<double, double>> plane(n);
    for (std::size_t i = 0; i < n; ++i) {
        plane[i] = {3.0 * rng.gaussian(), rng.gaussian()};
        for (std::size_t j = 0; j < 6; ++j)
            points(i, j) = 0.7 + plane[i].first * u[j] + plane[i].second * w[j];
    }
    const Pca2d pca = pca_2d(points);
    CHECK_FALSE(pca.rank_deficient);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = plane[i].first - plane[j].first;
            const double dy = plane[i].second - plane[j].second;
            const double want = dx * dx + dy * dy;
            const double gx = pca.coords(i, 0) - pca.coords(j, 0);
            const double gy = pca.coords(i, 1) - pca.coords(j, 1);
            CHECK(std::abs(want - (gx * gx + gy * gy)) < 1e-9 * (1.0 + want));
        }
    // projections of centered data have zero mean
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += pca.coords(i, 0);
        my += pca.coords(i, 1);
    }
    CHECK(std::abs(mx) < 1e-9);
    CHECK(std::abs(my) < 1e-9);
}

TEST_CASE("pca_2d first axis maximizes variance over random directions") {
    Rng rng(23);
    const std::size_t n = 30, d = 5;
    Matrix points = random_matrix(rng, n, d);
    const Pca2d pca = pca_2d(points);

    Vector mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += points(i, j) / static_cast<double>(n);
    double var0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) var0 += pca.coords(i, 0) * pca.coords(i, 0);

    for (int probe = 0; probe < 200; ++probe) {
        Vector dir(d);
        for (double& x : dir) x = rng.gaussian();
        const double nd = norm(dir);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double proj = 0.0;
            for (std::size_t j = 0; j < d; ++j) proj += (points(i, j) - mean[j]) * dir[j] / nd;
            var += proj * proj;
        }
        CHECK(var <= var0 + 1e-9 * var0);
    }
}

TEST_CASE("pca_2d sign convention makes the dominant loading positive") {
    // data stretched along coordinate 0: the first axis must align with +e0,
    // so projections are ordered like the raw coordinate
    Matrix points(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
        points(i, 0) = static_cast<double>(i) * 10.0;
        points(i, 1) = 0.1 * static_cast<double>(i % 2);
        points(i, 2) = 0.05;
    }
    const Pca2d pca = pca_2d(points);
    for (std::size_t i = 0; i + 1 < 5; ++i) CHECK(pca.coords(i, 0) < pca.coords(i + 1, 0));
}

TEST_CASE("pca_2d flags rank deficiency") {
    SUBCASE("identical points give all-zero coordinates") {
        Matrix points(4, 3);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 3; ++j) points(i, j) = 2.5;
        const Pca2d pca = pca_2d(points);
        CHECK(pca.rank_deficient);
        for (double v : pca.coords.data) CHECK(v == 0.0);
    }
    SUBCASE("collinear points keep distances on the first axis only") {
        Matrix points(4, 3);
        for (std::size_t i = 0; i < 4; ++i) {
            points(i, 0) = static_cast<double>(i);
            points(i, 1) = 2.0 * static_cast<double>(i);
            points(i, 2) = -1.0;
        }
        const Pca2d pca = pca_2d(points);
        CHECK(pca.rank_deficient);
        for (std::size_t i = 0; i < 4; ++i) CHECK(pca.coords(i, 1) == 0.0);
        const double step = std::abs(pca.coords(1, 0) - pca.coords(0, 0));
        CHECK(step == doctest::Approx(std::sqrt(5.0)).epsilon(1e-9));
    }
}

TEST_CASE("pca_2d validates its input") {
    CHECK_THROWS_AS(pca_2d(Matrix(2, 5)), std::invalid_argument);
    CHECK_THROWS_AS(pca_2d(Matrix(5, 1)), std::invalid_argument);
}

TEST_CASE("finite_diff_grad converges at second order") {
    // f(x) = sum a_i x_i^3 has third derivative 6 a_i, so the central
    // difference error is h^2 a_i x_i and halving h quarters it
    const Vector a = {0.7, -1.3, 2.1};
    const Vector x = {1.1, 0.4, -0.8};
    auto f = [&](const Vector& p) {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) acc += a[i] * p[i] * p[i] * p[i];
        return acc;
    };
    auto err_at = [&](double h) {
        const Vector g = finite_diff_grad(f, x, h);
        double worst = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            worst = std::max(worst, std::abs(g[i] - 3.0 * a[i] * x[i] * x[i]));
        return worst;
    };
    const double e1 = err_at(1e-4);
    const double e2 = err_at(5e-5);
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
}

TEST_CASE("finite_diff_grad identifies the coordinate of a bad evaluation") {
    auto f = [](const Vector& p) { return std::sqrt(p[1]); };
    const std::string msg =
        thrown_message([&] { finite_diff_grad(f, {1.0, 0.0}, 1e-5); });
    CHECK(msg.find("coordinate 1") != std::string::npos);
    CHECK_THROWS_AS(finite_diff_grad(f, {1.0, 1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and decoupled") {
    Rng a(42), b(42);
    for (int k = 0; k < 100; ++k) CHECK(a.next_u64() == b.next_u64());

    Rng s0(42, 0), s1(42, 1);
    bool all_equal = true;
    for (int k = 0; k < 16; ++k)
        if (s0.next_u64() != s1.next_u64()) all_equal = false;
    CHECK_FALSE(all_equal);

    CHECK(Rng(5, 3).next_u64() == Rng(mix_stream(5, 3)).next_u64());
}

TEST_CASE("rng uniform, index and shuffle behave") {
    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    for (int k = 0; k < 1000; ++k) CHECK(rng.index(7) < 7);
    CHECK_THROWS_AS(rng.index(0), std::invalid_argument);

    std::vector<int> v = {1, 2, 3, 4, 5, 6, 7, 8};
    auto sorted = v;
    rng.shuffle(v);
    auto resorted = v;
    std::sort(resorted.begin(), resorted.end());
    CHECK(resorted == sorted);

    double mean = 0.0;
    for (int k = 0; k < 10000; ++k) mean += rng.gaussian() / 10000.0;
    CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("format_double is shortest round-trip") {
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.5) == "0.5");
    CHECK(format_double(0.1) == "0.1");
    const double v = 1.0 / 3.0;
    CHECK(std::stod(format_double(v)) == v);
}
