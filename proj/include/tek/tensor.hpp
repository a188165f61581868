#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace tek {

// Row-major matrix of doubles. Training math runs in double so the
// finite-difference gradient checks are meaningful; checkpoints narrow to f32.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c)) {}

    double& at(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)];
    }
    double at(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return v[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)];
    }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
    const double* row(int r) const {
        return v.data() + static_cast<size_t>(r) * static_cast<size_t>(cols);
    }
    size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

using Vec = std::vector<double>;

}  // namespace tek
