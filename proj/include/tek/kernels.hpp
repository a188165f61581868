#pragma once

#include <cstdint>
#include <span>

#include "tek/tensor.hpp"

// Data-parallel kernels backing the encoder. Every kernel exists twice:
// kernels::ref holds the plain serial implementations used as the testing
// reference, and the kernels:: entry points parallelize with OpenMP over
// independent output rows. The per-row arithmetic is identical, so the two
// agree bit-for-bit at any thread count (tools/bench_kernels compares speed).
namespace tek::kernels {

namespace ref {

// C = A(m,k) * B(k,n), or += when accumulate
void matmul(Mat& C, const Mat& A, const Mat& B, bool accumulate = false);
// C = A(m,k) * B(n,k)^T
void matmul_nt(Mat& C, const Mat& A, const Mat& B, bool accumulate = false);
// C = A(k,m)^T * B(k,n)
void matmul_tn(Mat& C, const Mat& A, const Mat& B, bool accumulate = false);

void add_row_bias(Mat& X, const Vec& bias);

// y = gamma * (x - mean) / sqrt(var + eps) + beta, row-wise; caches mean and
// 1/sqrt(var+eps) for the backward pass
void layer_norm(Mat& out, const Mat& X, const Vec& gamma, const Vec& beta, Vec& mean,
                Vec& inv_std, double eps = 1e-5);
void layer_norm_backward(Mat& dX, Vec& dgamma, Vec& dbeta, const Mat& dY, const Mat& X,
                         const Vec& gamma, const Vec& mean, const Vec& inv_std);

void gelu(Mat& out, const Mat& X);
void gelu_backward(Mat& dX, const Mat& X, const Mat& dY);

// row-wise softmax over positions where key_ok != 0; banned keys get 0
void softmax_rows(Mat& P, const Mat& S, std::span<const uint8_t> key_ok);
// dS = P * (dP - rowsum(dP * P))
void softmax_backward_rows(Mat& dS, const Mat& P, const Mat& dP);

}  // namespace ref

void matmul(Mat& C, const Mat& A, const Mat& B, bool accumulate = false);
void matmul_nt(Mat& C, const Mat& A, const Mat& B, bool accumulate = false);
void matmul_tn(Mat& C, const Mat& A, const Mat& B, bool accumulate = false);
void add_row_bias(Mat& X, const Vec& bias);
void layer_norm(Mat& out, const Mat& X, const Vec& gamma, const Vec& beta, Vec& mean,
                Vec& inv_std, double eps = 1e-5);
void layer_norm_backward(Mat& dX, Vec& dgamma, Vec& dbeta, const Mat& dY, const Mat& X,
                         const Vec& gamma, const Vec& mean, const Vec& inv_std);
void gelu(Mat& out, const Mat& X);
void gelu_backward(Mat& dX, const Mat& X, const Mat& dY);
void softmax_rows(Mat& P, const Mat& S, std::span<const uint8_t> key_ok);
void softmax_backward_rows(Mat& dS, const Mat& P, const Mat& dP);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace tek::kernels
