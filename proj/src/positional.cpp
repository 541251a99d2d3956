#include "avstream/positional.h"

#include <cmath>

#include "avstream/errors.h"

namespace avs {

namespace {

RopeTable make_table(std::vector<double> positions, std::vector<uint8_t> sink_rows,
                     int head_dim, double base) {
    RopeTable t;
    t.head_dim = head_dim;
    t.base = base;
    t.positions = std::move(positions);
    t.sink_rows = std::move(sink_rows);
    const int half = head_dim / 2;
    t.cos_table.resize(t.positions.size() * half);
    t.sin_table.resize(t.positions.size() * half);
    for (size_t r = 0; r < t.positions.size(); ++r) {
        for (int j = 0; j < half; ++j) {
            double angle;
            if (t.sink_rows[r]) {
                angle = 0.0;  // cos 1, sin 0: the rotary transform degenerates to identity
            } else {
                angle = t.positions[r] * std::pow(base, -2.0 * j / head_dim);
            }
            t.cos_table[r * half + j] = std::cos(angle);
            t.sin_table[r * half + j] = std::sin(angle);
        }
    }
    return t;
}

}  // namespace

RopePair build_rope(const BlockLayout& layout, int head_dim, double base, bool identity_sinks) {
    if (head_dim <= 0 || head_dim % 2 != 0)
        throw config_error("build_rope: head_dim must be positive and even");
    if (base <= 1.0) throw config_error("build_rope: base must be > 1");

    const double ticks_per_video_frame =
        static_cast<double>(layout.rates.f_a) / static_cast<double>(layout.rates.f_v);

    std::vector<double> vpos(layout.video_token_count);
    std::vector<uint8_t> vsink(layout.video_token_count, 0);
    for (long q = 0; q < layout.video_token_count; ++q)
        vpos[q] = static_cast<double>(layout.video_frame_of(q)) * ticks_per_video_frame;

    std::vector<double> apos(layout.audio_token_count);
    std::vector<uint8_t> asink(layout.audio_token_count, 0);
    for (int s = 0; s < layout.S; ++s) {
        if (identity_sinks) {
            apos[s] = 0.0;
            asink[s] = 1;
        } else {
            apos[s] = static_cast<double>(s - layout.S);  // incremental ablation: -S..-1
        }
    }
    // Content positions count physical frames; sinks consume no positional budget.
    for (long m = 0; m < layout.N_a; ++m) apos[layout.S + m] = static_cast<double>(m);

    RopePair pair;
    pair.video = make_table(std::move(vpos), std::move(vsink), head_dim, base);
    pair.audio = make_table(std::move(apos), std::move(asink), head_dim, base);
    return pair;
}

std::vector<double> apply_rope(const RopeTable& table, size_t token_index,
                               const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != table.head_dim)
        throw shape_error("apply_rope: vector length does not match head_dim");
    std::vector<double> out = x;
    apply_rope_inplace(table, token_index, out.data());
    return out;
}

void apply_rope_inplace(const RopeTable& table, size_t token_index, double* x) {
    const int half = table.head_dim / 2;
    const double* c = table.cos_row(token_index);
    const double* s = table.sin_row(token_index);
    for (int j = 0; j < half; ++j) {
        const double x0 = x[2 * j], x1 = x[2 * j + 1];
        x[2 * j] = x0 * c[j] - x1 * s[j];
        x[2 * j + 1] = x0 * s[j] + x1 * c[j];
    }
}

void apply_rope_inverse_inplace(const RopeTable& table, size_t token_index, double* x) {
    const int half = table.head_dim / 2;
    const double* c = table.cos_row(token_index);
    const double* s = table.sin_row(token_index);
    for (int j = 0; j < half; ++j) {
        const double x0 = x[2 * j], x1 = x[2 * j + 1];
        x[2 * j] = x0 * c[j] + x1 * s[j];
        x[2 * j + 1] = -x0 * s[j] + x1 * c[j];
    }
}

}  // namespace avs
