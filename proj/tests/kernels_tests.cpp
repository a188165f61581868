#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tek/kernels.hpp"
#include "tek/rng.hpp"

using namespace tek;

namespace {

Mat random_mat(int r, int c, Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.v) {
        v = rng.normal();
    }
    return m;
}

Vec random_vec(size_t n, Rng& rng) {
    Vec v(n);
    for (auto& x : v) {
        x = rng.normal();
    }
    return v;
}

bool bit_equal(const Mat& a, const Mat& b) {
    return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
}

}  // namespace

TEST_CASE("matmul agrees with the direct dot-product definition") {
    Rng rng(1);
    const Mat a = random_mat(7, 5, rng);
    const Mat b = random_mat(5, 9, rng);
    Mat c(7, 9);
    kernels::ref::matmul(c, a, b);
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 9; ++j) {
            double want = 0.0;
            for (int k = 0; k < 5; ++k) {
                want += a.at(i, k) * b.at(k, j);
            }
            CHECK(c.at(i, j) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("transposed matmuls match explicit transposition") {
    Rng rng(2);
    const Mat a = random_mat(6, 4, rng);
    const Mat b = random_mat(8, 4, rng);
    Mat c(6, 8);
    kernels::ref::matmul_nt(c, a, b);  // a * b^T
    Mat bt(4, 8);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 4; ++j) {
            bt.at(j, i) = b.at(i, j);
        }
    }
    Mat want(6, 8);
    kernels::ref::matmul(want, a, bt);
    for (size_t i = 0; i < c.v.size(); ++i) {
        CHECK(c.v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));
    }

    const Mat x = random_mat(4, 6, rng);
    const Mat y = random_mat(4, 5, rng);
    Mat z(6, 5);
    kernels::ref::matmul_tn(z, x, y);  // x^T * y
    Mat xt(6, 4);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 6; ++j) {
            xt.at(j, i) = x.at(i, j);
        }
    }
    Mat want2(6, 5);
    kernels::ref::matmul(want2, xt, y);
    for (size_t i = 0; i < z.v.size(); ++i) {
        CHECK(z.v[i] == doctest::Approx(want2.v[i]).epsilon(1e-12));
    }
}

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const int m = 3 + static_cast<int>(rng.below(60));
        const int k = 3 + static_cast<int>(rng.below(60));
        const int n = 3 + static_cast<int>(rng.below(60));
        const Mat a = random_mat(m, k, rng);
        const Mat b = random_mat(k, n, rng);
        Mat c_ref(m, n);
        Mat c_omp(m, n);
        kernels::ref::matmul(c_ref, a, b);
        kernels::matmul(c_omp, a, b);
        CHECK(bit_equal(c_ref, c_omp));

        const Mat bt = random_mat(n, k, rng);
        Mat d_ref(m, n);
        Mat d_omp(m, n);
        kernels::ref::matmul_nt(d_ref, a, bt);
        kernels::matmul_nt(d_omp, a, bt);
        CHECK(bit_equal(d_ref, d_omp));

        const Mat e = random_mat(k, m, rng);
        const Mat f = random_mat(k, n, rng);
        Mat g_ref(m, n);
        Mat g_omp(m, n);
        kernels::ref::matmul_tn(g_ref, e, f);
        kernels::matmul_tn(g_omp, e, f);
        CHECK(bit_equal(g_ref, g_omp));

        const Vec gamma = random_vec(static_cast<size_t>(k), rng);
        const Vec beta = random_vec(static_cast<size_t>(k), rng);
        Mat ln_ref(m, k);
        Mat ln_omp(m, k);
        Vec mean_ref, inv_ref, mean_omp, inv_omp;
        kernels::ref::layer_norm(ln_ref, a, gamma, beta, mean_ref, inv_ref);
        kernels::layer_norm(ln_omp, a, gamma, beta, mean_omp, inv_omp);
        CHECK(bit_equal(ln_ref, ln_omp));
        CHECK(mean_ref == mean_omp);

        Mat gl_ref(m, k);
        Mat gl_omp(m, k);
        kernels::ref::gelu(gl_ref, a);
        kernels::gelu(gl_omp, a);
        CHECK(bit_equal(gl_ref, gl_omp));

        std::vector<uint8_t> key_ok(static_cast<size_t>(k), 1);
        key_ok[0] = 0;
        Mat sm_ref(m, k);
        Mat sm_omp(m, k);
        kernels::ref::softmax_rows(sm_ref, a, key_ok);
        kernels::softmax_rows(sm_omp, a, key_ok);
        CHECK(bit_equal(sm_ref, sm_omp));
    }
}

TEST_CASE("masked softmax rows sum to 1 and zero banned keys") {
    Rng rng(4);
    const Mat s = random_mat(5, 8, rng);
    std::vector<uint8_t> key_ok(8, 1);
    key_ok[2] = 0;
    key_ok[7] = 0;
    Mat p(5, 8);
    kernels::softmax_rows(p, s, key_ok);
    for (int i = 0; i < 5; ++i) {
        double total = 0.0;
        for (int j = 0; j < 8; ++j) {
            total += p.at(i, j);
            if (key_ok[static_cast<size_t>(j)] == 0) {
                CHECK(p.at(i, j) == 0.0);
            } else {
                CHECK(p.at(i, j) > 0.0);
            }
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer_norm backward matches finite differences") {
    Rng rng(5);
    const int rows = 3;
    const int cols = 6;
    const Mat x = random_mat(rows, cols, rng);
    const Vec gamma = random_vec(cols, rng);
    const Vec beta = random_vec(cols, rng);
    const Mat dy = random_mat(rows, cols, rng);

    auto loss_of = [&](const Mat& xin, const Vec& g, const Vec& b) {
        Mat out(rows, cols);
        Vec mean, inv;
        kernels::ref::layer_norm(out, xin, g, b, mean, inv);
        double total = 0.0;
        for (size_t i = 0; i < out.v.size(); ++i) {
            total += out.v[i] * dy.v[i];
        }
        return total;
    };

    Mat out(rows, cols);
    Vec mean, inv;
    kernels::ref::layer_norm(out, x, gamma, beta, mean, inv);
    Mat dx(rows, cols);
    Vec dgamma(static_cast<size_t>(cols), 0.0);
    Vec dbeta(static_cast<size_t>(cols), 0.0);
    kernels::ref::layer_norm_backward(dx, dgamma, dbeta, dy, x, gamma, mean, inv);

    const double h = 1e-6;
    for (size_t i = 0; i < x.v.size(); ++i) {
        Mat xp = x;
        Mat xm = x;
        xp.v[i] += h;
        xm.v[i] -= h;
        const double fd = (loss_of(xp, gamma, beta) - loss_of(xm, gamma, beta)) / (2 * h);
        CHECK(dx.v[i] == doctest::Approx(fd).epsilon(1e-4));
    }
    for (size_t i = 0; i < gamma.size(); ++i) {
        Vec gp = gamma;
        Vec gm = gamma;
        gp[i] += h;
        gm[i] -= h;
        const double fd = (loss_of(x, gp, beta) - loss_of(x, gm, beta)) / (2 * h);
        CHECK(dgamma[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("gelu gradient matches finite differences") {
    for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 1.7, 4.0}) {
        const double h = 1e-7;
        const double fd =
            (kernels::gelu_scalar(x + h) - kernels::gelu_scalar(x - h)) / (2 * h);
        CHECK(kernels::gelu_grad_scalar(x) == doctest::Approx(fd).epsilon(1e-5));
    }
    CHECK(kernels::gelu_scalar(0.0) == 0.0);
}

TEST_CASE("softmax backward matches finite differences") {
    Rng rng(6);
    const int n = 7;
    const Mat s = random_mat(2, n, rng);
    const Mat dp = random_mat(2, n, rng);
    std::vector<uint8_t> key_ok(static_cast<size_t>(n), 1);
    auto loss_of = [&](const Mat& scores) {
        Mat p(2, n);
        kernels::ref::softmax_rows(p, scores, key_ok);
        double total = 0.0;
        for (size_t i = 0; i < p.v.size(); ++i) {
            total += p.v[i] * dp.v[i];
        }
        return total;
    };
    Mat p(2, n);
    kernels::ref::softmax_rows(p, s, key_ok);
    Mat ds(2, n);
    kernels::ref::softmax_backward_rows(ds, p, dp);
    const double h = 1e-6;
    for (size_t i = 0; i < s.v.size(); ++i) {
        Mat sp = s;
        Mat sm = s;
        sp.v[i] += h;
        sm.v[i] -= h;
        const double fd = (loss_of(sp) - loss_of(sm)) / (2 * h);
        CHECK(ds.v[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }
}
