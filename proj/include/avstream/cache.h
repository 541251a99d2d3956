#pragma once

#include <deque>
#include <vector>

#include "avstream/flow.h"
#include "avstream/model.h"

namespace avs {

// Per-layer K/V rows of one modality for one macro-block (self-attention
// role plus the cross-key role where this modality serves as keys).
struct ModalityKV {
    std::vector<Tensor> self_k, self_v, cross_k, cross_v;
};

// Modality-Independent Rolling KV-Cache. The block-0 prefix segment
// (video prefix tokens; audio sinks + A0) is never evicted; standard
// blocks live in per-modality rings holding a contiguous suffix of the
// generated blocks. The two rings never share storage, so per-modality
// windows are independent.
class KVCacheState {
public:
    KVCacheState(int layers, int window_video, int window_audio);

    void set_prefix(ModalityKV video, ModalityKV audio);
    bool has_prefix() const { return has_prefix_; }

    // Appends block k (must be last resident + 1), evicting the oldest
    // standard block of a modality when its ring exceeds the window.
    void append_block(int k, ModalityKV video, ModalityKV audio);

    // Concatenated resident rows per layer/role, prefix first then ring
    // blocks in ascending block order.
    KeyContext assemble() const;

    int last_block() const { return last_block_; }
    long evicted_video() const { return evicted_video_; }
    long evicted_audio() const { return evicted_audio_; }
    std::vector<int> resident_video_blocks() const;
    std::vector<int> resident_audio_blocks() const;
    long resident_audio_rows(int layer) const;
    long resident_video_rows(int layer) const;

    // Throws if residency stops being a contiguous suffix or the prefix
    // was dropped.
    void check_invariants() const;

private:
    int layers_;
    int window_video_;
    int window_audio_;
    bool has_prefix_ = false;
    int last_block_ = 0;
    ModalityKV prefix_video_, prefix_audio_;
    std::deque<std::pair<int, ModalityKV>> video_ring_, audio_ring_;
    long evicted_video_ = 0;
    long evicted_audio_ = 0;
};

struct StreamEvent {
    int block = 0;
    Tensor video;  // clean latent chunk, (frames * tpvf) x C_v
    Tensor audio;  // frames x C_a
    double t_start = 0.0;  // seconds since stream start
    double t_end = 0.0;
};

struct StreamOptions {
    FewStepSchedule schedule;
    uint64_t seed = 0;
    int label = 0;
    int window_video = 4;
    int window_audio = 4;
};

// Block-streaming inference: emits the prefix then blocks 1..K, each
// denoised with the few-step sampler against the rolling cache, then
// cleanly re-forwarded at t=0 to produce its cached KV rows.
std::vector<StreamEvent> generate_stream(const DualStreamModel& model, const BlockLayout& layout,
                                         const StreamOptions& opt);

// Reference oracle: no cache, re-runs the full masked forward over all
// blocks generated so far for every denoising step. Identical sampling
// schedule and noise draws as generate_stream.
std::vector<StreamEvent> generate_reference(const DualStreamModel& model,
                                            const BlockLayout& layout, const StreamOptions& opt);

struct BenchResult {
    int K = 0;
    int window = 0;
    bool cached = true;
    double ttfc_seconds = 0.0;             // wall time to emit blocks 0 and 1
    std::vector<double> per_block_seconds; // k = 0..K (median over repeats)
    double total_seconds = 0.0;
    double video_fps = 0.0;                // physical video frames per wall second
    double slope_per_mean = 0.0;           // linear-fit slope over k=2..K / mean block time
};

BenchResult bench_stream(const DualStreamModel& model, const BlockLayout& layout,
                         const StreamOptions& opt, bool use_cache, int repeats = 3);

// Shared noise streams so the cached and reference paths draw identical
// samples for block k at sampler step `step`.
Tensor block_noise(uint64_t seed, int block, int step, bool video_side, size_t rows, size_t cols);

}  // namespace avs
