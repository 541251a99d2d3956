#include "avstream/model.h"

#include <cmath>

#include "avstream/errors.h"

namespace avs {

const char* stabilizer_name(Stabilizer s) {
    switch (s) {
        case Stabilizer::SinkIdentityRope: return "sink_identity_rope";
        case Stabilizer::SinkIncrementalRope: return "sink_incremental_rope";
        case Stabilizer::QkNorm: return "qk_norm";
        case Stabilizer::TanhGate: return "tanh_gate";
        case Stabilizer::None: return "none";
    }
    return "?";
}

Stabilizer stabilizer_from_name(const std::string& name) {
    if (name == "sink_identity_rope") return Stabilizer::SinkIdentityRope;
    if (name == "sink_incremental_rope") return Stabilizer::SinkIncrementalRope;
    if (name == "qk_norm") return Stabilizer::QkNorm;
    if (name == "tanh_gate") return Stabilizer::TanhGate;
    if (name == "none") return Stabilizer::None;
    throw config_error("unknown stabilizer variant: " + name);
}

void ModelConfig::validate() const {
    if (layers < 1) throw config_error("model.layers must be >= 1");
    if (heads_v < 1 || heads_a < 1 || cross_heads < 1) throw config_error("head counts must be >= 1");
    if (d_v % heads_v != 0 || d_a % heads_a != 0)
        throw config_error("model dims must be divisible by their head counts");
    if (head_dim_v() % 2 != 0 || head_dim_a() % 2 != 0 || cross_head_dim % 2 != 0)
        throw config_error("head dims must be even for rotary embeddings");
    if (ffn_mult < 1) throw config_error("model.ffn_mult must be >= 1");
    if (cond_classes < 1 || cond_dim < 1) throw config_error("conditioning dims must be >= 1");
    if (rope_base <= 1.0) throw config_error("model.rope_base must be > 1");
    if (video_channels < 1 || audio_channels < 1 || tokens_per_video_frame < 1)
        throw config_error("channel/token counts must be >= 1");
    if (sink_tokens < 0) throw config_error("model.sink_tokens must be >= 0");
    const bool sink_variant = stabilizer == Stabilizer::SinkIdentityRope ||
                              stabilizer == Stabilizer::SinkIncrementalRope;
    if (sink_variant && sink_tokens < 1)
        throw config_error("sink stabilizer variants require sink_tokens >= 1");
    if (!sink_variant && sink_tokens != 0)
        throw config_error("stabilizer '" + std::string(stabilizer_name(stabilizer)) +
                           "' is sink-free and requires sink_tokens == 0");
}

JointState JointState::uniform_t(Tensor video, Tensor audio, int label, double t, int K) {
    JointState st;
    st.video = std::move(video);
    st.audio = std::move(audio);
    st.label = label;
    st.t_block.assign(static_cast<size_t>(K) + 1, t);
    return st;
}

void JointState::validate(const BlockLayout& layout, const ModelConfig& cfg) const {
    if (video.rows != static_cast<size_t>(layout.video_token_count) ||
        video.cols != static_cast<size_t>(cfg.video_channels))
        throw shape_error("JointState: video latent shape does not match layout");
    if (audio.rows != static_cast<size_t>(layout.N_a) ||
        audio.cols != static_cast<size_t>(cfg.audio_channels))
        throw shape_error("JointState: audio latent shape does not match layout");
    if (t_block.size() != static_cast<size_t>(layout.K) + 1)
        throw shape_error("JointState: t_block must have K+1 entries");
    for (double t : t_block)
        if (!(t >= 0.0 && t <= 1.0)) throw shape_error("JointState: flow time outside [0,1]");
    if (label < -1 || label >= cfg.cond_classes)
        throw shape_error("JointState: label outside [-1, cond_classes)");
}

ParamTensor& ParamStore::create(const std::string& name, size_t rows, size_t cols) {
    if (index_.count(name)) throw std::logic_error("duplicate parameter: " + name);
    auto p = std::make_unique<ParamTensor>();
    p->name = name;
    p->value = Tensor(rows, cols);
    index_[name] = order_.size();
    order_.push_back(std::move(p));
    return *order_.back();
}

ParamTensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
    return *order_[it->second];
}

const ParamTensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::logic_error("unknown parameter: " + name);
    return *order_[it->second];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

std::vector<ParamTensor*> ParamStore::all() {
    std::vector<ParamTensor*> out;
    out.reserve(order_.size());
    for (auto& p : order_) out.push_back(p.get());
    return out;
}

std::vector<const ParamTensor*> ParamStore::all() const {
    std::vector<const ParamTensor*> out;
    out.reserve(order_.size());
    for (auto& p : order_) out.push_back(p.get());
    return out;
}

void ParamStore::zero_grads() {
    for (auto& p : order_) p->zero_grad();
}

namespace {

void fill_randn(Tensor& t, Rng& rng, double scale) {
    for (auto& x : t.data) x = scale * rng.normal();
}

constexpr int kTimeFeatures = 8;

Tensor time_feature_rows(const std::vector<double>& ts) {
    Tensor f(ts.size(), kTimeFeatures);
    for (size_t r = 0; r < ts.size(); ++r) {
        const double t = ts[r];
        double* row = f.row(r);
        row[0] = std::sin(M_PI * t);
        row[1] = std::cos(M_PI * t);
        row[2] = std::sin(2.0 * M_PI * t);
        row[3] = std::cos(2.0 * M_PI * t);
        row[4] = std::sin(4.0 * M_PI * t);
        row[5] = std::cos(4.0 * M_PI * t);
        row[6] = t;
        row[7] = 1.0;
    }
    return f;
}

}  // namespace

void DualStreamModel::init(uint64_t seed) {
    cfg.validate();
    Rng rng(seed, "model_init");
    const int L = cfg.layers;
    const double resid_scale = 1.0 / std::sqrt(2.0 * L);

    auto dense = [&](const std::string& name, int in, int out, double scale) {
        fill_randn(params.create(name + ".w", in, out).value, rng, scale);
        params.create(name + ".b", 1, out);
    };
    auto zeros2 = [&](const std::string& name, int in, int out) {
        params.create(name + ".w", in, out);
        params.create(name + ".b", 1, out);
    };
    auto mod_site = [&](const std::string& prefix, int d) {
        zeros2(prefix + ".shift", cfg.cond_dim, d);
        zeros2(prefix + ".scale", cfg.cond_dim, d);
    };

    dense("video.in", cfg.video_channels, cfg.d_v, 1.0 / std::sqrt(cfg.video_channels));
    fill_randn(params.create("video.slot_emb", cfg.tokens_per_video_frame, cfg.d_v).value, rng, 0.1);
    dense("audio.in", cfg.audio_channels, cfg.d_a, 1.0 / std::sqrt(cfg.audio_channels));
    if (cfg.sink_tokens > 0)
        fill_randn(params.create("audio.sinks", cfg.sink_tokens, cfg.d_a).value, rng, 0.5);

    fill_randn(params.create("cond.class_emb", cfg.cond_classes + 1, cfg.cond_dim).value, rng, 0.5);
    dense("cond.time", kTimeFeatures, cfg.cond_dim, 0.5);

    const bool gated = cfg.stabilizer == Stabilizer::TanhGate;
    for (int l = 0; l < L; ++l) {
        const std::string lp = "l" + std::to_string(l) + ".";
        for (bool video : {true, false}) {
            const std::string m = video ? "video" : "audio";
            const int d = video ? cfg.d_v : cfg.d_a;
            const int f = cfg.ffn_mult * d;
            const double ds = 1.0 / std::sqrt(static_cast<double>(d));
            mod_site(lp + m + ".attn", d);
            dense(lp + m + ".attn.wq", d, d, ds);
            dense(lp + m + ".attn.wk", d, d, ds);
            dense(lp + m + ".attn.wv", d, d, ds);
            dense(lp + m + ".attn.wo", d, d, ds * resid_scale);
            if (gated) {
                auto& gp = params.create(lp + m + ".attn.gate", 1, d);
                for (auto& x : gp.value.data) x = 1.0;
            }
            mod_site(lp + m + ".x", d);
            mod_site(lp + m + ".ffn", d);
            dense(lp + m + ".ffn.w1", d, f, ds);
            dense(lp + m + ".ffn.w2", f, d, resid_scale / std::sqrt(static_cast<double>(f)));
        }
        const int dx = cfg.cross_dim();
        const double dvs = 1.0 / std::sqrt(static_cast<double>(cfg.d_v));
        const double das = 1.0 / std::sqrt(static_cast<double>(cfg.d_a));
        const double dxs = 1.0 / std::sqrt(static_cast<double>(dx));
        dense(lp + "va.wq", cfg.d_v, dx, dvs);
        dense(lp + "va.wk", cfg.d_a, dx, das);
        dense(lp + "va.wv", cfg.d_a, dx, das);
        dense(lp + "va.wo", dx, cfg.d_v, dxs * resid_scale);
        dense(lp + "av.wq", cfg.d_a, dx, das);
        dense(lp + "av.wk", cfg.d_v, dx, dvs);
        dense(lp + "av.wv", cfg.d_v, dx, dvs);
        dense(lp + "av.wo", dx, cfg.d_a, dxs * resid_scale);
        if (gated) {
            auto& g1 = params.create(lp + "va.gate", 1, cfg.d_v);
            for (auto& x : g1.value.data) x = 1.0;
            auto& g2 = params.create(lp + "av.gate", 1, cfg.d_a);
            for (auto& x : g2.value.data) x = 1.0;
        }
    }
    mod_site("final.video", cfg.d_v);
    mod_site("final.audio", cfg.d_a);
    dense("video.head", cfg.d_v, cfg.video_channels, 0.02);
    dense("audio.head", cfg.d_a, cfg.audio_channels, 0.02);
}

void DualStreamModel::init_from(const DualStreamModel& src) {
    for (ParamTensor* p : params.all()) {
        if (!src.params.has(p->name)) continue;
        const ParamTensor& sp = src.params.get(p->name);
        if (sp.value.same_shape(p->value)) p->value = sp.value;
    }
}

RopeSet DualStreamModel::build_ropes(const BlockLayout& layout) const {
    RopeSet rs;
    rs.video_self = build_rope(layout, cfg.head_dim_v(), cfg.rope_base, cfg.identity_sinks()).video;
    rs.audio_self = build_rope(layout, cfg.head_dim_a(), cfg.rope_base, cfg.identity_sinks()).audio;
    RopePair cross = build_rope(layout, cfg.cross_head_dim, cfg.rope_base, cfg.identity_sinks());
    rs.video_cross = std::move(cross.video);
    rs.audio_cross = std::move(cross.audio);
    return rs;
}

namespace {

// Shared machinery for the full-sequence and chunked forwards. Queries are
// always the "current" rows; keys may be extended on the left by resident
// cached history.
struct Runner {
    Graph& g;
    DualStreamModel& m;
    const RopeSet& ropes;
    const ForwardOptions& opt;
    const KeyContext* ctx = nullptr;
    ChunkKV* kv_out = nullptr;

    long v_tok0 = 0;
    long a_tok0 = 0;
    MaskView mvv, maa, mva, mav;
    VarId cond_v = -1, cond_a = -1;
    VarId hv = -1, ha = -1;

    VarId P(const std::string& name) { return g.param(m.params.get(name)); }

    VarId modulate(VarId x, VarId cond, const std::string& prefix) {
        VarId sh = g.linear(cond, P(prefix + ".shift.w"), P(prefix + ".shift.b"));
        VarId sc = g.linear(cond, P(prefix + ".scale.w"), P(prefix + ".scale.b"));
        return g.add(g.mul(x, g.add_scalar(sc, 1.0)), sh);
    }

    bool qk_norm() const { return m.cfg.stabilizer == Stabilizer::QkNorm; }
    bool gated() const { return m.cfg.stabilizer == Stabilizer::TanhGate; }

    VarId maybe_gate(VarId o, const std::string& gate_name) {
        if (!gated()) return o;
        return g.mul_rowvec(g.tanh_op(o), P(gate_name));
    }

    void probe(int layer, Pathway pw, const std::vector<long>& abs_rows, long tok0,
               std::vector<ProbeStat>& stats, ProbeRequest& req) {
        if (opt.diagnostics == nullptr) return;
        for (long r : abs_rows) req.rows.push_back(r - tok0);
        req.out = &stats;
        (void)layer;
        (void)pw;
    }

    void record_probes(int layer, Pathway pw, long tok0, const std::vector<ProbeStat>& stats) {
        if (opt.diagnostics == nullptr) return;
        for (ProbeStat st : stats) {
            st.query_row += tok0;
            opt.diagnostics->push_back({layer, pw, st});
        }
    }

    void self_attn(int layer, bool video) {
        const std::string lp = "l" + std::to_string(layer) + (video ? ".video" : ".audio");
        const int heads = video ? m.cfg.heads_v : m.cfg.heads_a;
        const RopeTable* table = video ? &ropes.video_self : &ropes.audio_self;
        const long tok0 = video ? v_tok0 : a_tok0;
        VarId h = video ? hv : ha;
        VarId cond = video ? cond_v : cond_a;

        VarId u = modulate(g.layer_norm(h), cond, lp + ".attn");
        VarId q = g.linear(u, P(lp + ".attn.wq.w"), P(lp + ".attn.wq.b"));
        VarId k = g.linear(u, P(lp + ".attn.wk.w"), P(lp + ".attn.wk.b"));
        VarId v = g.linear(u, P(lp + ".attn.wv.w"), P(lp + ".attn.wv.b"));
        if (qk_norm()) {
            q = g.unit_norm_heads(q, heads);
            k = g.unit_norm_heads(k, heads);
        }
        q = g.rope(q, table, tok0, heads);
        k = g.rope(k, table, tok0, heads);

        if (kv_out != nullptr) {
            (video ? kv_out->vself_k : kv_out->aself_k).push_back(g.val(k));
            (video ? kv_out->vself_v : kv_out->aself_v).push_back(g.val(v));
        }
        VarId kf = k, vf = v;
        if (ctx != nullptr) {
            const Tensor& ck = video ? ctx->vself_k[layer] : ctx->aself_k[layer];
            const Tensor& cv = video ? ctx->vself_v[layer] : ctx->aself_v[layer];
            if (ck.rows > 0) {
                kf = g.concat_rows({g.constant(ck), k});
                vf = g.concat_rows({g.constant(cv), v});
            }
        }

        std::vector<ProbeStat> stats;
        ProbeRequest req;
        const auto& rows = video ? opt.probe_video_rows : opt.probe_audio_rows;
        probe(layer, video ? Pathway::VV : Pathway::AA, rows, tok0, stats, req);
        VarId att = g.attention(q, kf, vf, video ? mvv : maa, heads, opt.reduced_softmax,
                                req.out ? &req : nullptr);
        record_probes(layer, video ? Pathway::VV : Pathway::AA, tok0, stats);

        VarId o = g.linear(att, P(lp + ".attn.wo.w"), P(lp + ".attn.wo.b"));
        o = maybe_gate(o, lp + ".attn.gate");
        (video ? hv : ha) = g.add(h, o);
    }

    void cross(int layer) {
        const std::string lp = "l" + std::to_string(layer) + ".";
        // Barrier semantics: both directions read the same post-self-attn
        // snapshot before either residual lands.
        VarId wv = modulate(g.layer_norm(hv), cond_v, lp + "video.x");
        VarId wa = modulate(g.layer_norm(ha), cond_a, lp + "audio.x");
        const int heads = m.cfg.cross_heads;

        // V -> A: video queries attend audio keys
        VarId qv = g.linear(wv, P(lp + "va.wq.w"), P(lp + "va.wq.b"));
        VarId ka = g.linear(wa, P(lp + "va.wk.w"), P(lp + "va.wk.b"));
        VarId va = g.linear(wa, P(lp + "va.wv.w"), P(lp + "va.wv.b"));
        if (qk_norm()) {
            qv = g.unit_norm_heads(qv, heads);
            ka = g.unit_norm_heads(ka, heads);
        }
        qv = g.rope(qv, &ropes.video_cross, v_tok0, heads);
        ka = g.rope(ka, &ropes.audio_cross, a_tok0, heads);
        if (kv_out != nullptr) {
            kv_out->ax_k.push_back(g.val(ka));
            kv_out->ax_v.push_back(g.val(va));
        }
        VarId kaf = ka, vaf = va;
        if (ctx != nullptr && ctx->ax_k[layer].rows > 0) {
            kaf = g.concat_rows({g.constant(ctx->ax_k[layer]), ka});
            vaf = g.concat_rows({g.constant(ctx->ax_v[layer]), va});
        }
        std::vector<ProbeStat> stats_va;
        ProbeRequest req_va;
        probe(layer, Pathway::VA, opt.probe_video_rows, v_tok0, stats_va, req_va);
        VarId att_v = g.attention(qv, kaf, vaf, mva, heads, opt.reduced_softmax,
                                  req_va.out ? &req_va : nullptr);
        record_probes(layer, Pathway::VA, v_tok0, stats_va);
        VarId ov = g.linear(att_v, P(lp + "va.wo.w"), P(lp + "va.wo.b"));
        ov = maybe_gate(ov, lp + "va.gate");

        // A -> V: audio queries attend video keys
        VarId qa = g.linear(wa, P(lp + "av.wq.w"), P(lp + "av.wq.b"));
        VarId kv = g.linear(wv, P(lp + "av.wk.w"), P(lp + "av.wk.b"));
        VarId vv = g.linear(wv, P(lp + "av.wv.w"), P(lp + "av.wv.b"));
        if (qk_norm()) {
            qa = g.unit_norm_heads(qa, heads);
            kv = g.unit_norm_heads(kv, heads);
        }
        qa = g.rope(qa, &ropes.audio_cross, a_tok0, heads);
        kv = g.rope(kv, &ropes.video_cross, v_tok0, heads);
        if (kv_out != nullptr) {
            kv_out->vx_k.push_back(g.val(kv));
            kv_out->vx_v.push_back(g.val(vv));
        }
        VarId kvf = kv, vvf = vv;
        if (ctx != nullptr && ctx->vx_k[layer].rows > 0) {
            kvf = g.concat_rows({g.constant(ctx->vx_k[layer]), kv});
            vvf = g.concat_rows({g.constant(ctx->vx_v[layer]), vv});
        }
        std::vector<ProbeStat> stats_av;
        ProbeRequest req_av;
        probe(layer, Pathway::AV, opt.probe_audio_rows, a_tok0, stats_av, req_av);
        VarId att_a = g.attention(qa, kvf, vvf, mav, heads, opt.reduced_softmax,
                                  req_av.out ? &req_av : nullptr);
        record_probes(layer, Pathway::AV, a_tok0, stats_av);
        VarId oa = g.linear(att_a, P(lp + "av.wo.w"), P(lp + "av.wo.b"));
        oa = maybe_gate(oa, lp + "av.gate");

        hv = g.add(hv, ov);
        ha = g.add(ha, oa);
    }

    void ffn(int layer, bool video) {
        const std::string lp = "l" + std::to_string(layer) + (video ? ".video" : ".audio");
        VarId h = video ? hv : ha;
        VarId u = modulate(g.layer_norm(h), video ? cond_v : cond_a, lp + ".ffn");
        VarId mid = g.gelu(g.linear(u, P(lp + ".ffn.w1.w"), P(lp + ".ffn.w1.b")));
        VarId out = g.linear(mid, P(lp + ".ffn.w2.w"), P(lp + ".ffn.w2.b"));
        (video ? hv : ha) = g.add(h, out);
    }

    void run_layers() {
        for (int l = 0; l < m.cfg.layers; ++l) {
            self_attn(l, true);
            self_attn(l, false);
            cross(l);
            ffn(l, true);
            ffn(l, false);
            if (!all_finite(g.val(hv)) || !all_finite(g.val(ha)))
                throw numeric_error("non-finite activations after layer " + std::to_string(l), l);
        }
    }

    VarId head(bool video, long content_row0) {
        const std::string m_name = video ? "video" : "audio";
        VarId h = video ? hv : ha;
        VarId u = modulate(g.layer_norm(h), video ? cond_v : cond_a, "final." + m_name);
        VarId out = g.linear(u, P(m_name + ".head.w"), P(m_name + ".head.b"));
        if (content_row0 > 0)
            out = g.slice_rows(out, static_cast<size_t>(content_row0), g.val(out).rows);
        return out;
    }

    VarId build_cond(const std::vector<double>& ts, int label) {
        const int null_row = m.cfg.cond_classes;
        const int row = label < 0 ? null_row : label;
        VarId feats = g.constant(time_feature_rows(ts));
        VarId base = g.tanh_op(g.linear(feats, P("cond.time.w"), P("cond.time.b")));
        VarId cls = g.select_row(P("cond.class_emb"), static_cast<size_t>(row));
        return g.add_rowvec(base, cls);
    }

    void embed(const Tensor& video_latents, const Tensor& audio_latents, bool with_sinks) {
        VarId xv = g.constant(video_latents);
        hv = g.linear(xv, P("video.in.w"), P("video.in.b"));
        const size_t tpvf = static_cast<size_t>(m.cfg.tokens_per_video_frame);
        hv = g.add(hv, g.tile_rows(P("video.slot_emb"), g.val(hv).rows / tpvf));

        VarId xa = g.constant(audio_latents);
        VarId hac = g.linear(xa, P("audio.in.w"), P("audio.in.b"));
        if (with_sinks && m.cfg.sink_tokens > 0)
            ha = g.concat_rows({P("audio.sinks"), hac});
        else
            ha = hac;
    }
};

}  // namespace

VelocityVars DualStreamModel::forward(Graph& g, const BlockLayout& layout, const JointState& st,
                                      const FourWayMask& masks, const RopeSet& ropes,
                                      const ForwardOptions& opt) const {
    cfg.validate();
    st.validate(layout, cfg);
    if (layout.S != cfg.sink_tokens)
        throw shape_error("forward: layout sink count does not match model config");
    if (layout.rates.tokens_per_video_frame != cfg.tokens_per_video_frame)
        throw shape_error("forward: layout tokens_per_video_frame does not match model config");

    auto& self = const_cast<DualStreamModel&>(*this);
    Runner r{g, self, ropes, opt};
    r.mvv = {&masks.vv, 0, 0};
    r.maa = {&masks.aa, 0, 0};
    r.mva = {&masks.va, 0, 0};
    r.mav = {&masks.av, 0, 0};

    std::vector<double> tv(layout.video_token_count), ta(layout.audio_token_count);
    for (long q = 0; q < layout.video_token_count; ++q)
        tv[q] = st.t_block[video_block_of(q, layout)];
    for (long q = 0; q < layout.audio_token_count; ++q)
        ta[q] = st.t_block[audio_block_of(q, layout)];
    r.cond_v = r.build_cond(tv, st.label);
    r.cond_a = r.build_cond(ta, st.label);

    r.embed(st.video, st.audio, /*with_sinks=*/true);
    r.run_layers();

    VelocityVars out;
    out.video = r.head(true, 0);
    out.audio = r.head(false, layout.S);
    return out;
}

ChunkResult DualStreamModel::forward_chunk(Graph& g, const BlockLayout& layout,
                                           const RopeSet& ropes, const ChunkInput& in,
                                           const KeyContext* ctx, bool collect_kv,
                                           const ForwardOptions& opt) const {
    cfg.validate();
    if (layout.S != cfg.sink_tokens)
        throw shape_error("forward_chunk: layout sink count does not match model config");
    if (in.block < 0 || in.block > layout.K) throw shape_error("forward_chunk: bad block index");
    const BlockRanges ranges = block_token_ranges(layout, in.block);
    const long vframes = in.block == 0 ? 1 : layout.rates.f_v;
    const long aframes = in.block == 0 ? 1 : layout.rates.f_a;
    if (in.video.rows != static_cast<size_t>(vframes * cfg.tokens_per_video_frame) ||
        in.video.cols != static_cast<size_t>(cfg.video_channels))
        throw shape_error("forward_chunk: video chunk shape mismatch");
    if (in.audio.rows != static_cast<size_t>(aframes) ||
        in.audio.cols != static_cast<size_t>(cfg.audio_channels))
        throw shape_error("forward_chunk: audio chunk shape mismatch");
    if (!(in.t >= 0.0 && in.t <= 1.0)) throw shape_error("forward_chunk: flow time outside [0,1]");
    if (ctx != nullptr && !ctx->empty() &&
        ctx->vself_k.size() != static_cast<size_t>(cfg.layers))
        throw shape_error("forward_chunk: key context layer count mismatch");

    auto& self = const_cast<DualStreamModel&>(*this);
    Runner r{g, self, ropes, opt};
    ChunkResult res;
    if (collect_kv) r.kv_out = &res.kv;
    r.ctx = (ctx != nullptr && !ctx->empty()) ? ctx : nullptr;
    r.v_tok0 = ranges.video.begin;
    const bool with_sinks = in.block == 0;
    r.a_tok0 = with_sinks ? 0 : ranges.audio.begin;
    // all resident keys belong to blocks <= current, so everything visible
    r.mvv = r.maa = r.mva = r.mav = MaskView{};

    const long v_rows = vframes * cfg.tokens_per_video_frame;
    const long a_rows = aframes + (with_sinks ? cfg.sink_tokens : 0);
    r.cond_v = r.build_cond(std::vector<double>(v_rows, in.t), in.label);
    r.cond_a = r.build_cond(std::vector<double>(a_rows, in.t), in.label);

    r.embed(in.video, in.audio, with_sinks);
    r.run_layers();

    res.video_velocity = r.head(true, 0);
    res.audio_velocity = r.head(false, with_sinks ? layout.S : 0);
    return res;
}

double grad_check(DualStreamModel& model, const BlockLayout& layout, const JointState& st,
                  const FourWayMask& masks, uint64_t seed, int samples) {
    const RopeSet ropes = model.build_ropes(layout);
    Rng rng(seed, "grad_check");
    Tensor target_v = Tensor::randn(layout.video_token_count, model.cfg.video_channels, rng);
    Tensor target_a = Tensor::randn(layout.N_a, model.cfg.audio_channels, rng);

    auto loss_value = [&]() {
        Graph g(false);
        VelocityVars vel = model.forward(g, layout, st, masks, ropes);
        VarId l = g.add(g.mse(vel.video, g.constant(target_v)),
                        g.mse(vel.audio, g.constant(target_a)));
        return g.val(l).data[0];
    };

    model.params.zero_grads();
    {
        Graph g(true);
        VelocityVars vel = model.forward(g, layout, st, masks, ropes);
        VarId l = g.add(g.mse(vel.video, g.constant(target_v)),
                        g.mse(vel.audio, g.constant(target_a)));
        g.backward(l);
    }

    auto ps = model.params.all();
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        ParamTensor* p = ps[rng.index(ps.size())];
        if (p->value.size() == 0) continue;
        const size_t i = rng.index(p->value.size());
        const double w = p->value.data[i];
        const double h = 1e-5 * (1.0 + std::fabs(w));
        p->value.data[i] = w + h;
        const double lp = loss_value();
        p->value.data[i] = w - h;
        const double lm = loss_value();
        p->value.data[i] = w;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = p->grad.size() ? p->grad.data[i] : 0.0;
        const double mag = std::max(std::fabs(fd), std::fabs(an));
        if (mag < 1e-9) continue;  // both effectively zero
        const double rel = std::fabs(fd - an) / std::max(mag, 1e-6);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace avs
