#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "c2f/errors.hpp"

namespace c2f {

// Dense row-major matrix of doubles. Rows are time steps, columns are channels
// (or classes) throughout this codebase.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw ShapeError("Matrix: negative dimension");
    }

    double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

// Per-frame validity flags; 1 = real frame, 0 = padding.
using Mask = std::vector<std::uint8_t>;

inline Mask ones_mask(int n) { return Mask(static_cast<size_t>(n), 1); }

inline int mask_count(const Mask& m) {
    int n = 0;
    for (auto b : m) n += b ? 1 : 0;
    return n;
}

// A T x C matrix whose rows are probability distributions over classes.
using ProbSequence = Matrix;

}  // namespace c2f
