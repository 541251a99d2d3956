#pragma once

#include <vector>

#include "avstream/errors.h"
#include "avstream/tensor.h"

namespace avs {

// Flow convention used across every stage: x_t = (1-t)*x + t*eps with
// t in [0,1], t=0 clean data, velocity target eps - x. A few-step sampler
// walks a descending time schedule, reconstructing x0 and re-noising.

inline Tensor renoise(const Tensor& x, const Tensor& eps, double t) {
    Tensor out(x.rows, x.cols);
    for (size_t i = 0; i < x.data.size(); ++i)
        out.data[i] = (1.0 - t) * x.data[i] + t * eps.data[i];
    return out;
}

inline Tensor velocity_target(const Tensor& x, const Tensor& eps) {
    Tensor out(x.rows, x.cols);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = eps.data[i] - x.data[i];
    return out;
}

inline Tensor x0_from_velocity(const Tensor& x_t, const Tensor& v, double t) {
    Tensor out(x_t.rows, x_t.cols);
    for (size_t i = 0; i < x_t.data.size(); ++i) out.data[i] = x_t.data[i] - t * v.data[i];
    return out;
}

struct FewStepSchedule {
    std::vector<double> times{1.0, 0.75, 0.5, 0.25};  // descending flow times

    void validate() const {
        if (times.empty()) throw config_error("few-step schedule must not be empty");
        double prev = 1.0 + 1e-12;
        for (double t : times) {
            if (!(t > 0.0 && t <= 1.0) || t >= prev)
                throw config_error("few-step schedule must be strictly descending in (0,1]");
            prev = t;
        }
    }
};

}  // namespace avs
