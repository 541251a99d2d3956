#include <doctest.h>

#include <stdexcept>

#include "avstream/alignment.h"
#include "avstream/rng.h"

using namespace avs;

namespace {

// One-line independent oracle: accumulate frame counts second by second.
std::pair<long, long> lengths_by_counting(int f_v, int f_a, int K) {
    long nv = 1, na = 1;
    for (int k = 0; k < K; ++k) {
        nv += f_v;
        na += f_a;
    }
    return {nv, na};
}

BlockLayout toy_layout(int K = 2, int f_v = 3, int f_a = 25, int tpvf = 4, int S = 16) {
    return BlockLayout::make(RateSpec{f_v, f_a, tpvf}, K, S);
}

}  // namespace

TEST_CASE("latent_lengths matches the closed form") {
    CHECK(latent_lengths(RateSpec{3, 25, 1}, 5) == std::pair<long, long>{16, 126});
    CHECK(latent_lengths(RateSpec{3, 25, 1}, 0) == std::pair<long, long>{1, 1});
    CHECK(latent_lengths(RateSpec{2, 10, 1}, 7) == lengths_by_counting(2, 10, 7));
    CHECK(latent_lengths(RateSpec{2, 10, 1}, 7) == std::pair<long, long>{15, 71});

    Rng rng(7, "lengths");
    for (int i = 0; i < 200; ++i) {
        int f_v = 1 + static_cast<int>(rng.index(6));
        int f_a = 1 + static_cast<int>(rng.index(30));
        int K = static_cast<int>(rng.index(12));
        CHECK(latent_lengths(RateSpec{f_v, f_a, 1}, K) == lengths_by_counting(f_v, f_a, K));
    }
}

TEST_CASE("video_block_of at paper-scale patchification") {
    BlockLayout l = toy_layout(4, 3, 25, 384, 16);
    CHECK(video_block_of(383, l) == 0);
    CHECK(video_block_of(384, l) == 1);
    CHECK(video_block_of(1536, l) == 2);
    CHECK_THROWS_AS(video_block_of(-1, l), std::out_of_range);
    CHECK_THROWS_AS(video_block_of(l.video_token_count, l), std::out_of_range);
}

TEST_CASE("audio_block_of handles sinks and the prefix latent") {
    BlockLayout l = toy_layout(3, 3, 25, 4, 16);
    CHECK(audio_block_of(7, l) == 0);   // a sink
    CHECK(audio_block_of(16, l) == 0);  // A0
    CHECK(audio_block_of(17, l) == 1);
    CHECK(audio_block_of(41, l) == 1);
    CHECK(audio_block_of(42, l) == 2);
    CHECK_THROWS_AS(audio_block_of(l.audio_token_count, l), std::out_of_range);

    // brute-force enumeration oracle
    long q = 0;
    for (int s = 0; s < l.S + 1; ++s) CHECK(audio_block_of(q++, l) == 0);
    for (int k = 1; k <= l.K; ++k)
        for (int f = 0; f < l.rates.f_a; ++f) CHECK(audio_block_of(q++, l) == k);
    CHECK(q == l.audio_token_count);
}

TEST_CASE("block_token_ranges partitions both axes and inverts block_of") {
    BlockLayout l = toy_layout(3, 3, 25, 4, 16);
    BlockRanges r0 = block_token_ranges(l, 0);
    CHECK(r0.video.begin == 0);
    CHECK(r0.video.end == 4);
    CHECK(r0.audio.begin == 0);
    CHECK(r0.audio.end == 17);
    BlockRanges r1 = block_token_ranges(l, 1);
    CHECK(r1.video.begin == 4);
    CHECK(r1.video.end == 16);
    CHECK(r1.audio.begin == 17);
    CHECK(r1.audio.end == 42);
    CHECK_THROWS_AS(block_token_ranges(l, l.K + 1), std::out_of_range);

    // paper-rate prefix extent with tpvf=384
    BlockLayout lp = toy_layout(2, 3, 25, 384, 16);
    BlockRanges rp = block_token_ranges(lp, 0);
    CHECK(rp.video.end == 384);
    CHECK(rp.audio.end == 17);
    CHECK(block_token_ranges(lp, 1).video.end == 1536);

    // exact partition + roundtrip, exhaustive
    long vq = 0, aq = 0;
    for (int k = 0; k <= l.K; ++k) {
        BlockRanges r = block_token_ranges(l, k);
        CHECK(r.video.begin == vq);
        CHECK(r.audio.begin == aq);
        for (long q = r.video.begin; q < r.video.end; ++q) CHECK(video_block_of(q, l) == k);
        for (long q = r.audio.begin; q < r.audio.end; ++q) CHECK(audio_block_of(q, l) == k);
        vq = r.video.end;
        aq = r.audio.end;
    }
    CHECK(vq == l.video_token_count);
    CHECK(aq == l.audio_token_count);
}

TEST_CASE("block assignment is monotone and block sizes follow the rates") {
    Rng rng(11, "layouts");
    for (int trial = 0; trial < 50; ++trial) {
        int f_v = 1 + static_cast<int>(rng.index(5));
        int f_a = 1 + static_cast<int>(rng.index(30));
        int tpvf = 1 + static_cast<int>(rng.index(8));
        int K = static_cast<int>(rng.index(5));
        int S = static_cast<int>(rng.index(25));
        BlockLayout l = BlockLayout::make(RateSpec{f_v, f_a, tpvf}, K, S);

        int prev = 0;
        for (long q = 0; q < l.video_token_count; ++q) {
            int b = video_block_of(q, l);
            CHECK(b >= prev);
            prev = b;
        }
        prev = 0;
        for (long q = 0; q < l.audio_token_count; ++q) {
            int b = audio_block_of(q, l);
            CHECK(b >= prev);
            prev = b;
        }
        for (int k = 0; k <= K; ++k) {
            BlockRanges r = block_token_ranges(l, k);
            if (k == 0) {
                CHECK(r.video.size() == tpvf);
                CHECK(r.audio.size() == S + 1);
            } else {
                CHECK(r.video.size() == static_cast<long>(f_v) * tpvf);
                CHECK(r.audio.size() == f_a);
            }
        }
    }
}

TEST_CASE("invalid rates are rejected") {
    CHECK_THROWS(latent_lengths(RateSpec{0, 25, 1}, 2));
    CHECK_THROWS(BlockLayout::make(RateSpec{3, 25, 4}, -1, 0));
    CHECK_THROWS(BlockLayout::make(RateSpec{3, 25, 4}, 1, -2));
}
