#pragma once

#include <cstddef>
#include <vector>

#include "avstream/rng.h"

namespace avs {

// Dense row-major matrix of doubles. Everything in the compute stack is
// 2-D: token rows by channel/feature columns. Higher-rank data (frames x
// slots x channels) is flattened to token rows before it enters.
struct Tensor {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    size_t size() const { return rows * cols; }
    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    double* row(size_t r) { return data.data() + r * cols; }
    const double* row(size_t r) const { return data.data() + r * cols; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    static Tensor zeros(size_t r, size_t c) { return Tensor(r, c); }
    static Tensor full(size_t r, size_t c, double v) {
        Tensor t(r, c);
        for (auto& x : t.data) x = v;
        return t;
    }
    static Tensor randn(size_t r, size_t c, Rng& rng, double scale = 1.0) {
        Tensor t(r, c);
        for (auto& x : t.data) x = scale * rng.normal();
        return t;
    }
};

// C = A * B
void matmul(const Tensor& a, const Tensor& b, Tensor& c);
// C = A * B^T
void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c);
// C (+)= A^T * B ; accumulate flag keeps existing C contents
void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate);

void add_inplace(Tensor& dst, const Tensor& src, double scale = 1.0);
bool all_finite(const Tensor& t);
double max_abs(const Tensor& t);
double mean_abs(const Tensor& t);

// Round-trip through IEEE binary16. Values above the half range become
// +/-inf, which is exactly the overflow behaviour the reduced-precision
// softmax mode is meant to expose.
double to_half_precision(double x);

}  // namespace avs
