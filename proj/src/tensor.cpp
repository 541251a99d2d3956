#include "avstream/tensor.h"

#include <cmath>
#include <cstdint>
#include <cstring>

#include "avstream/errors.h"
#include "avstream/parallel.h"

namespace avs {

void matmul(const Tensor& a, const Tensor& b, Tensor& c) {
    if (a.cols != b.rows) throw shape_error("matmul: inner dimensions differ");
    c = Tensor(a.rows, b.cols);
    const size_t n = b.cols, k = a.cols;
    parallel_for(a.rows, [&](size_t i) {
        double* crow = c.row(i);
        const double* arow = a.row(i);
        for (size_t l = 0; l < k; ++l) {
            const double av = arow[l];
            if (av == 0.0) continue;
            const double* brow = b.row(l);
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
}

void matmul_nt(const Tensor& a, const Tensor& b, Tensor& c) {
    if (a.cols != b.cols) throw shape_error("matmul_nt: inner dimensions differ");
    c = Tensor(a.rows, b.rows);
    const size_t k = a.cols;
    parallel_for(a.rows, [&](size_t i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] = acc;
        }
    });
}

void matmul_tn(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
    if (a.rows != b.rows) throw shape_error("matmul_tn: inner dimensions differ");
    if (!accumulate || c.rows != a.cols || c.cols != b.cols) c = Tensor(a.cols, b.cols);
    const size_t n = b.cols, m = a.rows;
    parallel_for(a.cols, [&](size_t i) {
        double* crow = c.row(i);
        for (size_t l = 0; l < m; ++l) {
            const double av = a.at(l, i);
            if (av == 0.0) continue;
            const double* brow = b.row(l);
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
}

void add_inplace(Tensor& dst, const Tensor& src, double scale) {
    if (!dst.same_shape(src)) throw shape_error("add_inplace: shape mismatch");
    for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

bool all_finite(const Tensor& t) {
    for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data) m = std::max(m, std::fabs(v));
    return m;
}

double mean_abs(const Tensor& t) {
    if (t.data.empty()) return 0.0;
    double s = 0.0;
    for (double v : t.data) s += std::fabs(v);
    return s / static_cast<double>(t.data.size());
}

double to_half_precision(double x) {
    float f = static_cast<float>(x);
    uint32_t bits;
    std::memcpy(&bits, &f, sizeof(bits));

    const uint32_t sign = (bits >> 16) & 0x8000u;
    int32_t exp = static_cast<int32_t>((bits >> 23) & 0xff) - 127 + 15;
    uint32_t mant = bits & 0x7fffffu;

    uint16_t h;
    if (((bits >> 23) & 0xff) == 0xff) {  // inf / nan
        h = static_cast<uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
    } else if (exp >= 31) {  // overflow -> inf
        h = static_cast<uint16_t>(sign | 0x7c00u);
    } else if (exp <= 0) {  // subnormal or zero
        if (exp < -10) {
            h = static_cast<uint16_t>(sign);
        } else {
            mant |= 0x800000u;
            uint32_t shift = static_cast<uint32_t>(14 - exp);
            uint32_t half_mant = mant >> shift;
            // round to nearest even
            uint32_t rem = mant & ((1u << shift) - 1);
            uint32_t halfway = 1u << (shift - 1);
            if (rem > halfway || (rem == halfway && (half_mant & 1u))) ++half_mant;
            h = static_cast<uint16_t>(sign | half_mant);
        }
    } else {
        uint32_t half_mant = mant >> 13;
        uint32_t rem = mant & 0x1fffu;
        if (rem > 0x1000u || (rem == 0x1000u && (half_mant & 1u))) {
            ++half_mant;
            if (half_mant == 0x400u) {
                half_mant = 0;
                ++exp;
                if (exp >= 31) return sign ? -INFINITY : INFINITY;
            }
        }
        h = static_cast<uint16_t>(sign | (static_cast<uint32_t>(exp) << 10) | half_mant);
    }

    // decode back to double
    uint32_t hs = h & 0x8000u, he = (h >> 10) & 0x1fu, hm = h & 0x3ffu;
    double out;
    if (he == 0x1f) {
        out = hm ? std::nan("") : INFINITY;
    } else if (he == 0) {
        out = std::ldexp(static_cast<double>(hm), -24);
    } else {
        out = std::ldexp(1.0 + static_cast<double>(hm) / 1024.0, static_cast<int>(he) - 15);
    }
    return hs ? -out : out;
}

}  // namespace avs
