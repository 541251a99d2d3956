#pragma once

#include <cmath>
#include <vector>

#include "avstream/graph.h"

namespace avs {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 0.0;  // global-norm clip threshold; 0 disables (default: observable gradients)
};

// Returns the pre-clip global L2 gradient norm.
inline double global_grad_norm(const std::vector<ParamTensor*>& params) {
    double ss = 0.0;
    for (const ParamTensor* p : params)
        for (double g : p->grad.data) ss += g * g;
    return std::sqrt(ss);
}

class Adam {
public:
    explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

    AdamOptions& options() { return opt_; }

    // Applies one update from the accumulated grads; returns the pre-clip
    // global gradient norm so callers can track ||grad||_max faithfully.
    double step(std::vector<ParamTensor*> params) {
        const double norm = global_grad_norm(params);
        double scale = 1.0;
        if (opt_.clip > 0.0 && norm > opt_.clip && std::isfinite(norm))
            scale = opt_.clip / norm;
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
        const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
        for (ParamTensor* p : params) {
            if (p->grad.size() == 0) continue;
            if (p->adam_m.size() == 0) {
                p->adam_m = Tensor(p->value.rows, p->value.cols);
                p->adam_v = Tensor(p->value.rows, p->value.cols);
            }
            for (size_t i = 0; i < p->value.size(); ++i) {
                const double g = p->grad.data[i] * scale;
                p->adam_m.data[i] = opt_.beta1 * p->adam_m.data[i] + (1 - opt_.beta1) * g;
                p->adam_v.data[i] = opt_.beta2 * p->adam_v.data[i] + (1 - opt_.beta2) * g * g;
                const double mhat = p->adam_m.data[i] / bc1;
                const double vhat = p->adam_v.data[i] / bc2;
                p->value.data[i] -= opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
            }
        }
        return norm;
    }

    long steps_taken() const { return t_; }

private:
    AdamOptions opt_;
    long t_ = 0;
};

}  // namespace avs
