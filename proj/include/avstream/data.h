#pragma once

#include <cstdint>

#include "avstream/alignment.h"
#include "avstream/tensor.h"

namespace avs {

// Class-conditioned driver process standing in for VAE latents: a shared
// low-frequency sinusoid bank plus transient events injected at the same
// physical times into both modalities. The event coupling is what makes
// cross-modal synchrony measurable (and learnable) by construction.
struct WorldSpec {
    int classes = 4;
    int video_channels = 8;
    int audio_channels = 4;
    double event_rate = 1.0;    // expected events per physical second
    double event_width = 0.08;  // seconds
    double coupling = 3.0;      // event gain into video motion and audio envelope
    double noise = 0.05;        // observation noise, per channel

    void validate() const;
};

struct LatentPair {
    Tensor video;  // (N_v * tpvf) x C_v, token-major
    Tensor audio;  // N_a x C_a
    int label = 0;
    uint64_t seed = 0;
    int K = 0;
    RateSpec rates;
};

// Deterministic per (spec, label, K, rates, seed).
LatentPair sample_pair(const WorldSpec& spec, int label, int K, const RateSpec& rates,
                       uint64_t seed);

// Pearson correlation, over the K standard one-second blocks, between the
// audio high-frequency envelope (per-second RMS of the last channel) and
// per-second mean absolute temporal video difference. Degenerate signals
// (constant either side, or K < 2) score 0.
double sync_score(const LatentPair& pair);

}  // namespace avs
