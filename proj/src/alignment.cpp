#include "avstream/alignment.h"

#include <stdexcept>
#include <string>

#include "avstream/errors.h"

namespace avs {

void RateSpec::validate() const {
    if (f_v < 1 || f_a < 1 || tokens_per_video_frame < 1)
        throw config_error("RateSpec: f_v, f_a and tokens_per_video_frame must be >= 1");
}

BlockLayout BlockLayout::make(const RateSpec& rates, int K, int S) {
    rates.validate();
    if (K < 0) throw config_error("BlockLayout: K must be >= 0");
    if (S < 0) throw config_error("BlockLayout: S must be >= 0");
    BlockLayout l;
    l.rates = rates;
    l.K = K;
    l.S = S;
    auto [nv, na] = latent_lengths(rates, K);
    l.N_v = nv;
    l.N_a = na;
    l.video_token_count = l.N_v * rates.tokens_per_video_frame;
    l.audio_token_count = S + l.N_a;
    return l;
}

std::pair<long, long> latent_lengths(const RateSpec& rates, int K) {
    rates.validate();
    if (K < 0) throw config_error("latent_lengths: K must be >= 0");
    return {1 + static_cast<long>(K) * rates.f_v, 1 + static_cast<long>(K) * rates.f_a};
}

int video_block_of(long q, const BlockLayout& layout) {
    if (q < 0 || q >= layout.video_token_count)
        throw std::out_of_range("video_block_of: token index " + std::to_string(q) +
                                " outside [0, " + std::to_string(layout.video_token_count) + ")");
    const long tpvf = layout.rates.tokens_per_video_frame;
    if (q < tpvf) return 0;
    return static_cast<int>(1 + (q - tpvf) / (static_cast<long>(layout.rates.f_v) * tpvf));
}

int audio_block_of(long q, const BlockLayout& layout) {
    if (q < 0 || q >= layout.audio_token_count)
        throw std::out_of_range("audio_block_of: token index " + std::to_string(q) +
                                " outside [0, " + std::to_string(layout.audio_token_count) + ")");
    if (q <= layout.S) return 0;  // sinks and the A0 prefix latent
    const long m = q - layout.S - 1;  // post-prefix content offset
    return static_cast<int>(1 + m / layout.rates.f_a);
}

BlockRanges block_token_ranges(const BlockLayout& layout, int k) {
    if (k < 0 || k > layout.K)
        throw std::out_of_range("block_token_ranges: block " + std::to_string(k) +
                                " outside [0, " + std::to_string(layout.K) + "]");
    const long tpvf = layout.rates.tokens_per_video_frame;
    BlockRanges r;
    if (k == 0) {
        r.video = {0, tpvf};
        r.audio = {0, layout.S + 1};
        return r;
    }
    const long vstride = static_cast<long>(layout.rates.f_v) * tpvf;
    r.video = {tpvf + (k - 1) * vstride, tpvf + static_cast<long>(k) * vstride};
    const long a0 = layout.S + 1;
    r.audio = {a0 + static_cast<long>(k - 1) * layout.rates.f_a,
               a0 + static_cast<long>(k) * layout.rates.f_a};
    return r;
}

}  // namespace avs
