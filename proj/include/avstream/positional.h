#pragma once

#include <cstdint>
#include <vector>

#include "avstream/alignment.h"

namespace avs {

// Tabulated rotary embedding for one modality's token axis. Positions are
// measured in audio-frame ticks so both modalities share one physical-time
// axis: audio frame m sits at m ticks, video frame n at n * f_a / f_v
// ticks, and one second is f_a ticks in both streams. Sink rows are forced
// to the identity rotation (cos 1, sin 0) unless the incremental-position
// ablation is selected, which parks them at ticks -S..-1 instead.
struct RopeTable {
    int head_dim = 0;
    double base = 10000.0;
    std::vector<double> positions;   // per token row, in ticks
    std::vector<uint8_t> sink_rows;  // 1 where the identity constraint applies
    std::vector<double> cos_table;   // rows x head_dim/2
    std::vector<double> sin_table;

    size_t rows() const { return positions.size(); }
    const double* cos_row(size_t r) const { return cos_table.data() + r * (head_dim / 2); }
    const double* sin_row(size_t r) const { return sin_table.data() + r * (head_dim / 2); }
};

struct RopePair {
    RopeTable video;
    RopeTable audio;
};

RopePair build_rope(const BlockLayout& layout, int head_dim, double base, bool identity_sinks);

// Pairwise 2-D rotation of one head vector by the angles tabulated for a
// token row. Identity on sink rows by construction.
std::vector<double> apply_rope(const RopeTable& table, size_t token_index,
                               const std::vector<double>& x);

// In-place variant over a raw head segment.
void apply_rope_inplace(const RopeTable& table, size_t token_index, double* x);
// Inverse rotation; used by backprop through the rotary op.
void apply_rope_inverse_inplace(const RopeTable& table, size_t token_index, double* x);

}  // namespace avs
