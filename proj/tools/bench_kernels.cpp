// Times the serial reference kernels against their OpenMP counterparts.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tek/kernels.hpp"
#include "tek/rng.hpp"

namespace {

using tek::Mat;
using tek::Vec;
using Clock = std::chrono::steady_clock;

Mat random_mat(int r, int c, tek::Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.v) {
        v = rng.normal();
    }
    return m;
}

double time_ms(const std::function<void()>& fn, int iters) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) {
        fn();
    }
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

void report(const std::string& name, double serial_ms, double omp_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name.c_str(), serial_ms, omp_ms,
                serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
    int size = 512;
    int iters = 10;
    if (argc > 1) {
        size = std::stoi(argv[1]);
    }
    if (argc > 2) {
        iters = std::stoi(argv[2]);
    }
    std::printf("threads: %d, size: %d, iters: %d\n", omp_get_max_threads(), size, iters);
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    tek::Rng rng(7);
    const Mat a = random_mat(size, size, rng);
    const Mat b = random_mat(size, size, rng);
    Mat c(size, size);
    report("matmul",
           time_ms([&] { tek::kernels::ref::matmul(c, a, b); }, iters),
           time_ms([&] { tek::kernels::matmul(c, a, b); }, iters));
    report("matmul_nt",
           time_ms([&] { tek::kernels::ref::matmul_nt(c, a, b); }, iters),
           time_ms([&] { tek::kernels::matmul_nt(c, a, b); }, iters));
    report("matmul_tn",
           time_ms([&] { tek::kernels::ref::matmul_tn(c, a, b); }, iters),
           time_ms([&] { tek::kernels::matmul_tn(c, a, b); }, iters));

    const Vec gamma(static_cast<size_t>(size), 1.0);
    const Vec beta(static_cast<size_t>(size), 0.0);
    Vec mean, inv_std;
    report("layer_norm",
           time_ms([&] { tek::kernels::ref::layer_norm(c, a, gamma, beta, mean, inv_std); },
                   iters),
           time_ms([&] { tek::kernels::layer_norm(c, a, gamma, beta, mean, inv_std); }, iters));

    report("gelu",
           time_ms([&] { tek::kernels::ref::gelu(c, a); }, iters),
           time_ms([&] { tek::kernels::gelu(c, a); }, iters));

    const std::vector<uint8_t> key_ok(static_cast<size_t>(size), 1);
    report("softmax_rows",
           time_ms([&] { tek::kernels::ref::softmax_rows(c, a, key_ok); }, iters),
           time_ms([&] { tek::kernels::softmax_rows(c, a, key_ok); }, iters));
    return 0;
}
