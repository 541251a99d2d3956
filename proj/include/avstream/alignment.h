#pragma once

#include <cstddef>
#include <utility>

namespace avs {

// Latent frame rates of the two modality VAEs plus video patchification.
// One physical second holds exactly f_v video latent frames and f_a audio
// latent frames; each audio latent frame is a single token.
struct RateSpec {
    int f_v = 3;
    int f_a = 25;
    int tokens_per_video_frame = 4;

    void validate() const;
};

// Closed-form temporal bookkeeping for a K-second sequence.
//
// Token axis conventions (fixed; the mask and RoPE modules depend on them):
//   video: frame-major, frame n occupies [n*tpvf, (n+1)*tpvf). Frame 0 is
//          the prefix latent V0.
//   audio: indices [0, S) are sink slots, index S is the prefix latent A0,
//          content frames follow one token each.
struct BlockLayout {
    RateSpec rates;
    int K = 0;           // physical seconds == number of standard blocks
    int S = 0;           // audio sink token count
    long N_v = 0;        // total video latent frames = 1 + K*f_v
    long N_a = 0;        // total audio latent frames = 1 + K*f_a
    long video_token_count = 0;
    long audio_token_count = 0;  // includes sinks

    static BlockLayout make(const RateSpec& rates, int K, int S);

    long video_prefix_tokens() const { return rates.tokens_per_video_frame; }
    long audio_prefix_tokens() const { return S + 1; }

    // Frame index of a video token.
    long video_frame_of(long q) const { return q / rates.tokens_per_video_frame; }
};

// Eq-(2)-style latent length law: (1 + K*f_v, 1 + K*f_a).
std::pair<long, long> latent_lengths(const RateSpec& rates, int K);

// Macro-block index of a token; 0 is the global prefix.
int video_block_of(long q, const BlockLayout& layout);
int audio_block_of(long q, const BlockLayout& layout);

struct TokenRange {
    long begin = 0;
    long end = 0;  // half-open
    long size() const { return end - begin; }
};

struct BlockRanges {
    TokenRange video;
    TokenRange audio;
};

// Half-open token ranges of block k; the union over k partitions both axes.
BlockRanges block_token_ranges(const BlockLayout& layout, int k);

}  // namespace avs
