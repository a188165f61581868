#include "tek/kernels.hpp"

#include <cassert>
#include <cmath>

namespace tek::kernels {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline void matmul_row(double* c, const Mat& A, const Mat& B, int i, bool accumulate) {
    if (!accumulate) {
        for (int j = 0; j < B.cols; ++j) {
            c[j] = 0.0;
        }
    }
    for (int k = 0; k < A.cols; ++k) {
        const double a = A.at(i, k);
        const double* b = B.row(k);
        for (int j = 0; j < B.cols; ++j) {
            c[j] += a * b[j];
        }
    }
}

inline void matmul_nt_row(double* c, const Mat& A, const Mat& B, int i, bool accumulate) {
    const double* a = A.row(i);
    for (int j = 0; j < B.rows; ++j) {
        const double* b = B.row(j);
        double acc = 0.0;
        for (int k = 0; k < A.cols; ++k) {
            acc += a[k] * b[k];
        }
        c[j] = accumulate ? c[j] + acc : acc;
    }
}

inline void matmul_tn_row(double* c, const Mat& A, const Mat& B, int i, bool accumulate) {
    if (!accumulate) {
        for (int j = 0; j < B.cols; ++j) {
            c[j] = 0.0;
        }
    }
    for (int k = 0; k < A.rows; ++k) {
        const double a = A.at(k, i);
        const double* b = B.row(k);
        for (int j = 0; j < B.cols; ++j) {
            c[j] += a * b[j];
        }
    }
}

inline void layer_norm_row(Mat& out, const Mat& X, const Vec& gamma, const Vec& beta,
                           Vec& mean, Vec& inv_std, double eps, int i) {
    const int n = X.cols;
    const double* x = X.row(i);
    double m = 0.0;
    for (int j = 0; j < n; ++j) {
        m += x[j];
    }
    m /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
        const double d = x[j] - m;
        var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[static_cast<size_t>(i)] = m;
    inv_std[static_cast<size_t>(i)] = inv;
    double* y = out.row(i);
    for (int j = 0; j < n; ++j) {
        y[j] = gamma[static_cast<size_t>(j)] * (x[j] - m) * inv + beta[static_cast<size_t>(j)];
    }
}

inline void layer_norm_backward_row(Mat& dX, const Mat& dY, const Mat& X, const Vec& gamma,
                                    const Vec& mean, const Vec& inv_std, int i) {
    const int n = X.cols;
    const double m = mean[static_cast<size_t>(i)];
    const double inv = inv_std[static_cast<size_t>(i)];
    const double* x = X.row(i);
    const double* dy = dY.row(i);
    // dx = inv * (dh - mean(dh) - xhat * mean(dh * xhat)), dh = dy * gamma
    double sum_dh = 0.0;
    double sum_dh_xhat = 0.0;
    for (int j = 0; j < n; ++j) {
        const double xhat = (x[j] - m) * inv;
        const double dh = dy[j] * gamma[static_cast<size_t>(j)];
        sum_dh += dh;
        sum_dh_xhat += dh * xhat;
    }
    const double mean_dh = sum_dh / n;
    const double mean_dh_xhat = sum_dh_xhat / n;
    double* dx = dX.row(i);
    for (int j = 0; j < n; ++j) {
        const double xhat = (x[j] - m) * inv;
        const double dh = dy[j] * gamma[static_cast<size_t>(j)];
        dx[j] = inv * (dh - mean_dh - xhat * mean_dh_xhat);
    }
}

inline void softmax_row(Mat& P, const Mat& S, std::span<const uint8_t> key_ok, int i) {
    const int n = S.cols;
    const double* s = S.row(i);
    double* p = P.row(i);
    double max_v = -1e300;
    for (int j = 0; j < n; ++j) {
        if (key_ok[static_cast<size_t>(j)] != 0 && s[j] > max_v) {
            max_v = s[j];
        }
    }
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        if (key_ok[static_cast<size_t>(j)] != 0) {
            p[j] = std::exp(s[j] - max_v);
            total += p[j];
        } else {
            p[j] = 0.0;
        }
    }
    const double inv = 1.0 / total;
    for (int j = 0; j < n; ++j) {
        p[j] *= inv;
    }
}

inline void softmax_backward_row(Mat& dS, const Mat& P, const Mat& dP, int i) {
    const int n = P.cols;
    const double* p = P.row(i);
    const double* dp = dP.row(i);
    double dot = 0.0;
    for (int j = 0; j < n; ++j) {
        dot += dp[j] * p[j];
    }
    double* ds = dS.row(i);
    for (int j = 0; j < n; ++j) {
        ds[j] = p[j] * (dp[j] - dot);
    }
}

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

namespace ref {

void matmul(Mat& C, const Mat& A, const Mat& B, bool accumulate) {
    assert(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols);
    for (int i = 0; i < A.rows; ++i) {
        matmul_row(C.row(i), A, B, i, accumulate);
    }
}

void matmul_nt(Mat& C, const Mat& A, const Mat& B, bool accumulate) {
    assert(A.cols == B.cols && C.rows == A.rows && C.cols == B.rows);
    for (int i = 0; i < A.rows; ++i) {
        matmul_nt_row(C.row(i), A, B, i, accumulate);
    }
}

void matmul_tn(Mat& C, const Mat& A, const Mat& B, bool accumulate) {
    assert(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols);
    for (int i = 0; i < A.cols; ++i) {
        matmul_tn_row(C.row(i), A, B, i, accumulate);
    }
}

void add_row_bias(Mat& X, const Vec& bias) {
    assert(bias.size() == static_cast<size_t>(X.cols));
    for (int i = 0; i < X.rows; ++i) {
        double* x = X.row(i);
        for (int j = 0; j < X.cols; ++j) {
            x[j] += bias[static_cast<size_t>(j)];
        }
    }
}

void layer_norm(Mat& out, const Mat& X, const Vec& gamma, const Vec& beta, Vec& mean,
                Vec& inv_std, double eps) {
    mean.resize(static_cast<size_t>(X.rows));
    inv_std.resize(static_cast<size_t>(X.rows));
    for (int i = 0; i < X.rows; ++i) {
        layer_norm_row(out, X, gamma, beta, mean, inv_std, eps, i);
    }
}

void layer_norm_backward(Mat& dX, Vec& dgamma, Vec& dbeta, const Mat& dY, const Mat& X,
                         const Vec& gamma, const Vec& mean, const Vec& inv_std) {
    for (int i = 0; i < X.rows; ++i) {
        layer_norm_backward_row(dX, dY, X, gamma, mean, inv_std, i);
    }
    // parameter grads reduce over rows; kept serial so accumulation order is fixed
    for (int i = 0; i < X.rows; ++i) {
        const double m = mean[static_cast<size_t>(i)];
        const double inv = inv_std[static_cast<size_t>(i)];
        const double* x = X.row(i);
        const double* dy = dY.row(i);
        for (int j = 0; j < X.cols; ++j) {
            dgamma[static_cast<size_t>(j)] += dy[j] * (x[j] - m) * inv;
            dbeta[static_cast<size_t>(j)] += dy[j];
        }
    }
}

void gelu(Mat& out, const Mat& X) {
    for (int i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        double* y = out.row(i);
        for (int j = 0; j < X.cols; ++j) {
            y[j] = gelu_scalar(x[j]);
        }
    }
}

void gelu_backward(Mat& dX, const Mat& X, const Mat& dY) {
    for (int i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        const double* dy = dY.row(i);
        double* dx = dX.row(i);
        for (int j = 0; j < X.cols; ++j) {
            dx[j] = dy[j] * gelu_grad_scalar(x[j]);
        }
    }
}

void softmax_rows(Mat& P, const Mat& S, std::span<const uint8_t> key_ok) {
    assert(key_ok.size() >= static_cast<size_t>(S.cols));
    for (int i = 0; i < S.rows; ++i) {
        softmax_row(P, S, key_ok, i);
    }
}

void softmax_backward_rows(Mat& dS, const Mat& P, const Mat& dP) {
    for (int i = 0; i < P.rows; ++i) {
        softmax_backward_row(dS, P, dP, i);
    }
}

}  // namespace ref

void matmul(Mat& C, const Mat& A, const Mat& B, bool accumulate) {
    assert(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < A.rows; ++i) {
        matmul_row(C.row(i), A, B, i, accumulate);
    }
}

void matmul_nt(Mat& C, const Mat& A, const Mat& B, bool accumulate) {
    assert(A.cols == B.cols && C.rows == A.rows && C.cols == B.rows);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < A.rows; ++i) {
        matmul_nt_row(C.row(i), A, B, i, accumulate);
    }
}

void matmul_tn(Mat& C, const Mat& A, const Mat& B, bool accumulate) {
    assert(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < A.cols; ++i) {
        matmul_tn_row(C.row(i), A, B, i, accumulate);
    }
}

void add_row_bias(Mat& X, const Vec& bias) {
    assert(bias.size() == static_cast<size_t>(X.cols));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < X.rows; ++i) {
        double* x = X.row(i);
        for (int j = 0; j < X.cols; ++j) {
            x[j] += bias[static_cast<size_t>(j)];
        }
    }
}

void layer_norm(Mat& out, const Mat& X, const Vec& gamma, const Vec& beta, Vec& mean,
                Vec& inv_std, double eps) {
    mean.resize(static_cast<size_t>(X.rows));
    inv_std.resize(static_cast<size_t>(X.rows));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < X.rows; ++i) {
        layer_norm_row(out, X, gamma, beta, mean, inv_std, eps, i);
    }
}

void layer_norm_backward(Mat& dX, Vec& dgamma, Vec& dbeta, const Mat& dY, const Mat& X,
                         const Vec& gamma, const Vec& mean, const Vec& inv_std) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < X.rows; ++i) {
        layer_norm_backward_row(dX, dY, X, gamma, mean, inv_std, i);
    }
    for (int i = 0; i < X.rows; ++i) {
        const double m = mean[static_cast<size_t>(i)];
        const double inv = inv_std[static_cast<size_t>(i)];
        const double* x = X.row(i);
        const double* dy = dY.row(i);
        for (int j = 0; j < X.cols; ++j) {
            dgamma[static_cast<size_t>(j)] += dy[j] * (x[j] - m) * inv;
            dbeta[static_cast<size_t>(j)] += dy[j];
        }
    }
}

void gelu(Mat& out, const Mat& X) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        double* y = out.row(i);
        for (int j = 0; j < X.cols; ++j) {
            y[j] = gelu_scalar(x[j]);
        }
    }
}

void gelu_backward(Mat& dX, const Mat& X, const Mat& dY) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < X.rows; ++i) {
        const double* x = X.row(i);
        const double* dy = dY.row(i);
        double* dx = dX.row(i);
        for (int j = 0; j < X.cols; ++j) {
            dx[j] = dy[j] * gelu_grad_scalar(x[j]);
        }
    }
}

void softmax_rows(Mat& P, const Mat& S, std::span<const uint8_t> key_ok) {
    assert(key_ok.size() >= static_cast<size_t>(S.cols));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < S.rows; ++i) {
        softmax_row(P, S, key_ok, i);
    }
}

void softmax_backward_rows(Mat& dS, const Mat& P, const Mat& dP) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < P.rows; ++i) {
        softmax_backward_row(dS, P, dP, i);
    }
}

}  // namespace tek::kernels
