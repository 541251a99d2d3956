#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "avstream/alignment.h"
#include "avstream/graph.h"
#include "avstream/masking.h"
#include "avstream/positional.h"

namespace avs {

// Training stabilizer applied from the causal stages onward. The sink_*
// variants keep S learnable audio sink tokens and differ only in the
// positional treatment; qk_norm / tanh_gate / none are sink-free
// alternatives, so they require S == 0.
enum class Stabilizer {
    SinkIdentityRope,
    SinkIncrementalRope,
    QkNorm,
    TanhGate,
    None,
};

const char* stabilizer_name(Stabilizer s);
Stabilizer stabilizer_from_name(const std::string& name);

struct ModelConfig {
    int layers = 4;
    int d_v = 128;
    int d_a = 64;
    int heads_v = 4;
    int heads_a = 4;
    int cross_heads = 2;
    int cross_head_dim = 16;  // shared attention width bridging the unequal streams
    int ffn_mult = 4;
    int sink_tokens = 16;
    Stabilizer stabilizer = Stabilizer::SinkIdentityRope;
    int cond_classes = 4;
    int cond_dim = 32;
    double rope_base = 10000.0;
    int video_channels = 8;
    int audio_channels = 4;
    int tokens_per_video_frame = 4;

    int head_dim_v() const { return d_v / heads_v; }
    int head_dim_a() const { return d_a / heads_a; }
    int cross_dim() const { return cross_heads * cross_head_dim; }
    bool identity_sinks() const { return stabilizer != Stabilizer::SinkIncrementalRope; }
    void validate() const;
};

// Joint noisy latent pair plus conditioning. Latents are stored flattened:
// video rows are (frame, slot) tokens with video_channels columns, audio
// rows are frames with audio_channels columns. Sinks are model parameters,
// not latents, so they never appear here.
struct JointState {
    Tensor video;  // (N_v * tpvf) x C_v
    Tensor audio;  // N_a x C_a
    int label = 0;
    std::vector<double> t_block;  // flow time per macro-block, size K+1

    static JointState uniform_t(Tensor video, Tensor audio, int label, double t, int K);
    void validate(const BlockLayout& layout, const ModelConfig& cfg) const;
};

struct VelocityVars {
    VarId video = -1;  // (N_v * tpvf) x C_v
    VarId audio = -1;  // N_a x C_a, sinks excluded
};

// One rotary table per (modality axis, head width) pair actually used:
// self-attention tables at the modality head widths plus a shared pair at
// the cross-attention width.
struct RopeSet {
    RopeTable video_self;
    RopeTable audio_self;
    RopeTable video_cross;
    RopeTable audio_cross;
};

// Per-layer cached key/value tensors for one token chunk, one entry per
// attention role. Keys are stored post-RoPE at their absolute positions.
struct ChunkKV {
    std::vector<Tensor> vself_k, vself_v;  // video self-attention
    std::vector<Tensor> aself_k, aself_v;  // audio self-attention
    std::vector<Tensor> vx_k, vx_v;        // video as cross keys (A->V)
    std::vector<Tensor> ax_k, ax_v;        // audio as cross keys (V->A)
};

// Resident history assembled by the cache for a chunk forward.
struct KeyContext {
    std::vector<Tensor> vself_k, vself_v, aself_k, aself_v, vx_k, vx_v, ax_k, ax_v;
    bool empty() const { return vself_k.empty(); }
};

struct AttnProbeRecord {
    int layer = 0;
    Pathway pathway = Pathway::AA;
    ProbeStat stat;
};

struct ForwardOptions {
    bool reduced_softmax = false;
    // Probe queries, as absolute token indices on each modality axis.
    std::vector<long> probe_audio_rows;
    std::vector<long> probe_video_rows;
    std::vector<AttnProbeRecord>* diagnostics = nullptr;
};

struct ChunkInput {
    int block = 0;
    Tensor video;  // (frames in block * tpvf) x C_v
    Tensor audio;  // frames in block x C_a (A0 only for block 0; sinks are injected)
    double t = 0.0;
    int label = 0;
};

struct ChunkResult {
    VarId video_velocity = -1;
    VarId audio_velocity = -1;  // content rows only
    ChunkKV kv;                 // filled when collect_kv was requested
};

class ParamStore {
public:
    ParamTensor& create(const std::string& name, size_t rows, size_t cols);
    ParamTensor& get(const std::string& name);
    const ParamTensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
    std::vector<ParamTensor*> all();
    std::vector<const ParamTensor*> all() const;
    void zero_grads();
    size_t count() const { return order_.size(); }

private:
    std::vector<std::unique_ptr<ParamTensor>> order_;
    std::map<std::string, size_t> index_;
};

// Dual-stream flow transformer: per layer, modality self-attention and
// FFNs run independently and the streams meet only at the two cross
// pathways. Video and audio widths are asymmetric on purpose.
class DualStreamModel {
public:
    ModelConfig cfg;
    ParamStore params;

    void init(uint64_t seed);

    // Copies every same-named, same-shaped parameter from src; anything
    // new (sink embeddings, gate gains) keeps its fresh init.
    void init_from(const DualStreamModel& src);

    RopeSet build_ropes(const BlockLayout& layout) const;

    VelocityVars forward(Graph& g, const BlockLayout& layout, const JointState& st,
                         const FourWayMask& masks, const RopeSet& ropes,
                         const ForwardOptions& opt = {}) const;

    // Forward of one macro-block chunk against resident cached history.
    // History tensors enter as constants, so no gradient ever flows into
    // cached blocks. collect_kv captures this chunk's post-RoPE K/V rows.
    ChunkResult forward_chunk(Graph& g, const BlockLayout& layout, const RopeSet& ropes,
                              const ChunkInput& in, const KeyContext* ctx, bool collect_kv,
                              const ForwardOptions& opt = {}) const;
};

// Max relative error between backprop gradients and central finite
// differences on a random parameter subset.
double grad_check(DualStreamModel& model, const BlockLayout& layout, const JointState& st,
                  const FourWayMask& masks, uint64_t seed, int samples = 200);

}  // namespace avs
