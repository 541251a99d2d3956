#include <doctest.h>

#include <cmath>
#include <functional>

#include "avstream/graph.h"
#include "avstream/rng.h"

using namespace avs;

namespace {

// Generic finite-difference check: loss(params) built by `build`, gradient
// of every input entry compared against central differences.
double fd_check(std::vector<ParamTensor>& inputs,
                const std::function<VarId(Graph&, std::vector<VarId>&)>& build) {
    for (auto& p : inputs) p.zero_grad();
    {
        Graph g(true);
        std::vector<VarId> ids;
        for (auto& p : inputs) ids.push_back(g.param(p));
        VarId loss = build(g, ids);
        g.backward(loss);
    }
    auto eval = [&]() {
        Graph g(false);
        std::vector<VarId> ids;
        for (auto& p : inputs) ids.push_back(g.constant(p.value));
        return g.val(build(g, ids)).data[0];
    };
    double worst = 0.0;
    for (auto& p : inputs) {
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double w = p.value.data[i];
            const double h = 1e-6 * (1.0 + std::fabs(w));
            p.value.data[i] = w + h;
            double lp = eval();
            p.value.data[i] = w - h;
            double lm = eval();
            p.value.data[i] = w;
            const double fd = (lp - lm) / (2 * h);
            const double an = p.grad.data[i];
            const double mag = std::max(std::fabs(fd), std::fabs(an));
            if (mag < 1e-10) continue;
            worst = std::max(worst, std::fabs(fd - an) / std::max(mag, 1e-6));
        }
    }
    return worst;
}

ParamTensor rand_param(const std::string& name, size_t r, size_t c, Rng& rng) {
    ParamTensor p;
    p.name = name;
    p.value = Tensor::randn(r, c, rng);
    return p;
}

}  // namespace

TEST_CASE("elementwise and matmul gradients") {
    Rng rng(1, "ops");
    std::vector<ParamTensor> in;
    in.push_back(rand_param("a", 3, 4, rng));
    in.push_back(rand_param("b", 4, 5, rng));
    in.push_back(rand_param("c", 3, 5, rng));
    double err = fd_check(in, [](Graph& g, std::vector<VarId>& v) {
        VarId m = g.matmul(v[0], v[1]);
        VarId s = g.mul(m, v[2]);
        VarId t = g.add(g.scale(s, 0.7), g.add_scalar(v[2], 0.3));
        return g.mse(t, g.constant(Tensor::zeros(3, 5)));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("layer_norm, gelu, tanh gradients") {
    Rng rng(2, "ops2");
    std::vector<ParamTensor> in;
    in.push_back(rand_param("x", 5, 8, rng));
    double err = fd_check(in, [](Graph& g, std::vector<VarId>& v) {
        VarId y = g.layer_norm(v[0]);
        y = g.gelu(y);
        y = g.tanh_op(y);
        return g.mse(y, g.constant(Tensor::full(5, 8, 0.1)));
    });
    CHECK(err < 1e-5);
}

TEST_CASE("linear, rowvec, slice, concat, tile gradients") {
    Rng rng(3, "ops3");
    std::vector<ParamTensor> in;
    in.push_back(rand_param("x", 6, 4, rng));
    in.push_back(rand_param("w", 4, 3, rng));
    in.push_back(rand_param("b", 1, 3, rng));
    in.push_back(rand_param("slot", 2, 3, rng));
    double err = fd_check(in, [](Graph& g, std::vector<VarId>& v) {
        VarId y = g.linear(v[0], v[1], v[2]);
        y = g.add(y, g.tile_rows(v[3], 3));
        VarId top = g.slice_rows(y, 0, 2);
        VarId bot = g.slice_rows(y, 2, 6);
        VarId cat = g.concat_rows({g.mul_rowvec(top, v[2]), bot, top});
        return g.mse(cat, g.constant(Tensor::zeros(8, 3)));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("masked attention gradients with rope and unit-norm heads") {
    Rng rng(4, "attn");
    BlockLayout layout = BlockLayout::make(RateSpec{2, 3, 1}, 2, 2);
    FourWayMask masks = build_masks(layout);
    RopePair rp = build_rope(layout, 4, 100.0, true);

    const size_t n = layout.audio_token_count;  // 2 sinks + 1 + 6 = 9
    std::vector<ParamTensor> in;
    in.push_back(rand_param("q", n, 8, rng));
    in.push_back(rand_param("k", n, 8, rng));
    in.push_back(rand_param("v", n, 8, rng));
    MaskView mv{&masks.aa, 0, 0};

    double err = fd_check(in, [&](Graph& g, std::vector<VarId>& vars) {
        VarId q = g.rope(vars[0], &rp.audio, 0, 2);
        VarId k = g.rope(vars[1], &rp.audio, 0, 2);
        VarId o = g.attention(q, k, vars[2], mv, 2);
        return g.mse(o, g.constant(Tensor::zeros(n, 8)));
    });
    CHECK(err < 1e-5);

    double err2 = fd_check(in, [&](Graph& g, std::vector<VarId>& vars) {
        VarId q = g.unit_norm_heads(vars[0], 2);
        VarId k = g.unit_norm_heads(vars[1], 2);
        VarId o = g.attention(q, k, vars[2], mv, 2);
        return g.mse(o, g.constant(Tensor::zeros(n, 8)));
    });
    CHECK(err2 < 1e-5);
}

TEST_CASE("attention respects the mask exactly") {
    Rng rng(5, "attn_mask");
    BlockLayout layout = BlockLayout::make(RateSpec{1, 2, 1}, 2, 1);
    FourWayMask masks = build_masks(layout);
    const size_t n = layout.audio_token_count;

    Tensor q = Tensor::randn(n, 4, rng), k = Tensor::randn(n, 4, rng),
           v = Tensor::randn(n, 4, rng);
    Graph g(false);
    VarId o1 = g.attention(g.constant(q), g.constant(k), g.constant(v),
                           MaskView{&masks.aa, 0, 0}, 2);
    // mutate a masked key; visible outputs must not move
    Tensor k2 = k, v2 = v;
    const size_t last = n - 1;  // last block's key, invisible to block-1 queries
    for (size_t c = 0; c < 4; ++c) {
        k2.at(last, c) += 3.0;
        v2.at(last, c) -= 2.0;
    }
    VarId o2 = g.attention(g.constant(k2), g.constant(k2), g.constant(v2),
                           MaskView{&masks.aa, 0, 0}, 2);
    (void)o2;
    VarId o3 = g.attention(g.constant(q), g.constant(k2), g.constant(v2),
                           MaskView{&masks.aa, 0, 0}, 2);
    long first_b1 = block_token_ranges(layout, 1).audio.begin;
    for (long r = 0; r < first_b1 + 2; ++r)
        for (size_t c = 0; c < 4; ++c)
            CHECK(g.val(o1).at(r, c) == g.val(o3).at(r, c));
}

TEST_CASE("attention probes report entropy and visible counts") {
    BlockLayout layout = BlockLayout::make(RateSpec{1, 4, 1}, 2, 3);
    FourWayMask masks = build_masks(layout);
    const size_t n = layout.audio_token_count;
    Graph g(false);
    // all-equal keys give uniform attention: entropy = ln(visible)
    Tensor q = Tensor::full(n, 4, 0.5), k = Tensor::full(n, 4, 0.5), v = Tensor::full(n, 4, 1.0);
    std::vector<ProbeStat> stats;
    ProbeRequest req;
    req.rows = {static_cast<long>(block_token_ranges(layout, 1).audio.begin)};
    req.out = &stats;
    g.attention(g.constant(q), g.constant(k), g.constant(v), MaskView{&masks.aa, 0, 0}, 1,
                false, &req);
    REQUIRE(stats.size() == 1);
    const long vis = causal_frontier(layout, 1).aa;
    CHECK(stats[0].visible_keys == vis);
    CHECK(stats[0].entropy == doctest::Approx(std::log(static_cast<double>(vis))).epsilon(1e-9));
    CHECK(stats[0].max_weight == doctest::Approx(1.0 / vis).epsilon(1e-9));
}

TEST_CASE("reduced-precision softmax overflows to nan on large logits") {
    Graph g(false);
    Tensor q = Tensor::full(1, 2, 12.0);  // logit ~ 101.8 after scaling: exp overflows fp16
    Tensor k = Tensor::full(1, 2, 12.0);
    Tensor v = Tensor::full(1, 2, 1.0);
    VarId o = g.attention(g.constant(q), g.constant(k), g.constant(v), MaskView{}, 1, true);
    CHECK(!all_finite(g.val(o)));

    // wide precision is immune to the same logits
    VarId o2 = g.attention(g.constant(q), g.constant(k), g.constant(v), MaskView{}, 1, false);
    CHECK(all_finite(g.val(o2)));
}

TEST_CASE("half round-trip saturates and preserves small values") {
    CHECK(avs::to_half_precision(1.0) == 1.0);
    CHECK(avs::to_half_precision(0.5) == 0.5);
    CHECK(std::isinf(avs::to_half_precision(70000.0)));
    CHECK(avs::to_half_precision(65504.0) == 65504.0);
    CHECK(avs::to_half_precision(-2.0) == -2.0);
    CHECK(avs::to_half_precision(1.0 + 1e-5) == 1.0);  // rounds to nearest half
}
