#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "avstream/masking.h"
#include "avstream/positional.h"
#include "avstream/tensor.h"

namespace avs {

using VarId = int;

// Named trainable tensor plus its gradient accumulator and Adam state.
struct ParamTensor {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    void zero_grad() {
        grad = Tensor(value.rows, value.cols);
    }
};

// Window into a mask matrix; a null matrix means everything is visible
// (the streaming engine's resident keys are visible by construction).
struct MaskView {
    const MaskMatrix* m = nullptr;
    long q0 = 0;
    long k0 = 0;
    bool visible(long q, long k) const { return m == nullptr || m->at(q0 + q, k0 + k); }
};

// Per-query attention statistics captured during forward for the
// stability diagnostics (entropy averaged over heads).
struct ProbeStat {
    long query_row = 0;
    double entropy = 0.0;
    double max_weight = 0.0;
    long visible_keys = 0;
};

struct ProbeRequest {
    std::vector<long> rows;        // query rows to probe
    std::vector<ProbeStat>* out = nullptr;
};

// Reverse-mode tape over 2-D tensors. One graph per training step; ops
// record a backward closure when any input requires gradients.
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    VarId constant(Tensor t);
    VarId param(ParamTensor& p);

    const Tensor& val(VarId id) const { return nodes_[id].val; }
    Tensor& grad_buf(VarId id);
    bool needs_grad(VarId id) const { return nodes_[id].needs_grad; }

    VarId matmul(VarId a, VarId b);
    VarId add(VarId a, VarId b);
    VarId sub(VarId a, VarId b);
    VarId mul(VarId a, VarId b);
    VarId scale(VarId a, double c);
    VarId add_scalar(VarId a, double c);
    VarId add_rowvec(VarId x, VarId v);
    VarId mul_rowvec(VarId x, VarId v);
    VarId linear(VarId x, VarId w, VarId b);
    VarId layer_norm(VarId x, double eps = 1e-5);
    VarId gelu(VarId x);
    VarId tanh_op(VarId x);
    VarId slice_rows(VarId x, size_t r0, size_t r1);
    VarId concat_rows(const std::vector<VarId>& xs);
    VarId select_row(VarId table, size_t r);
    VarId tile_rows(VarId x, size_t times);
    VarId rope(VarId x, const RopeTable* table, long token0, int heads);
    VarId unit_norm_heads(VarId x, int heads, double eps = 1e-12);
    VarId attention(VarId q, VarId k, VarId v, MaskView mask, int heads,
                    bool reduced_precision = false, const ProbeRequest* probe = nullptr);
    VarId mse(VarId a, VarId b);
    VarId stop_grad(VarId x);

    void backward(VarId loss);

    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void()> back;
        bool needs_grad = false;
        ParamTensor* param = nullptr;
    };

    VarId push(Tensor val, bool needs_grad, std::function<void()> back = nullptr);

    std::deque<Node> nodes_;
    bool grad_enabled_;
};

}  // namespace avs
