#include <doctest.h>

#include <stdexcept>

#include "avstream/masking.h"
#include "avstream/rng.h"

using namespace avs;

namespace {

BlockLayout toy(int K = 2, int f_v = 3, int f_a = 25, int tpvf = 4, int S = 16) {
    return BlockLayout::make(RateSpec{f_v, f_a, tpvf}, K, S);
}

bool all_true(const MaskMatrix& m) {
    for (uint8_t b : m.bits)
        if (!b) return false;
    return true;
}

long row_count(const MaskMatrix& m, size_t q) {
    long n = 0;
    for (size_t k = 0; k < m.n_k; ++k)
        if (m.at(q, k)) ++n;
    return n;
}

}  // namespace

TEST_CASE("K=0 masks are fully bidirectional") {
    FourWayMask m = build_masks(toy(0));
    CHECK(all_true(m.vv));
    CHECK(all_true(m.aa));
    CHECK(all_true(m.va));
    CHECK(all_true(m.av));
}

TEST_CASE("future blocks are hidden across modalities") {
    BlockLayout l = toy(3);
    FourWayMask m = build_masks(l);
    BlockRanges b1 = block_token_ranges(l, 1);
    BlockRanges b2 = block_token_ranges(l, 2);
    // audio query in block 1 never sees a video key in block 2
    CHECK_FALSE(m.av.at(b1.audio.begin, b2.video.begin));
    CHECK_FALSE(m.aa.at(b1.audio.begin, b2.audio.begin));
    CHECK_FALSE(m.vv.at(b1.video.begin, b2.video.begin));
    CHECK_FALSE(m.va.at(b1.video.begin, b2.audio.begin));
}

TEST_CASE("build_masks equals the brute-force oracle on the toy layout") {
    BlockLayout l = toy();
    FourWayMask a = build_masks(l);
    FourWayMask b = oracle_masks(l);
    CHECK(a.vv == b.vv);
    CHECK(a.aa == b.aa);
    CHECK(a.va == b.va);
    CHECK(a.av == b.av);
}

TEST_CASE("oracle equivalence over randomized layouts") {
    Rng rng(23, "mask_layouts");
    for (int trial = 0; trial < 30; ++trial) {
        int f_v = 1 + static_cast<int>(rng.index(5));
        int f_a = 1 + static_cast<int>(rng.index(30));
        int tpvf = 1 + static_cast<int>(rng.index(8));
        int K = static_cast<int>(rng.index(5));
        int S = static_cast<int>(rng.index(25));
        BlockLayout l = BlockLayout::make(RateSpec{f_v, f_a, tpvf}, K, S);
        FourWayMask a = build_masks(l);
        FourWayMask b = oracle_masks(l);
        REQUIRE(a.vv == b.vv);
        REQUIRE(a.aa == b.aa);
        REQUIRE(a.va == b.va);
        REQUIRE(a.av == b.av);
    }
}

TEST_CASE("intra-block visibility is symmetric") {
    BlockLayout l = toy(2);
    FourWayMask m = build_masks(l);
    for (int k = 0; k <= l.K; ++k) {
        BlockRanges r = block_token_ranges(l, k);
        for (long q = r.video.begin; q < r.video.end; ++q)
            for (long j = r.video.begin; j < r.video.end; ++j) {
                CHECK(m.vv.at(q, j));
                CHECK(m.vv.at(j, q));
            }
    }
}

TEST_CASE("no leakage, prefix universality, monotone rows") {
    BlockLayout l = toy(3, 2, 7, 3, 5);
    FourWayMask m = build_masks(l);

    for (long q = 0; q < l.video_token_count; ++q)
        for (long k = 0; k < l.video_token_count; ++k)
            if (video_block_of(k, l) > video_block_of(q, l)) CHECK_FALSE(m.vv.at(q, k));

    // block-0 keys visible to every query in every pathway
    BlockRanges r0 = block_token_ranges(l, 0);
    for (long q = 0; q < l.video_token_count; ++q) {
        for (long k = r0.video.begin; k < r0.video.end; ++k) CHECK(m.vv.at(q, k));
        for (long k = r0.audio.begin; k < r0.audio.end; ++k) CHECK(m.va.at(q, k));
    }
    for (long q = 0; q < l.audio_token_count; ++q) {
        for (long k = r0.audio.begin; k < r0.audio.end; ++k) CHECK(m.aa.at(q, k));
        for (long k = r0.video.begin; k < r0.video.end; ++k) CHECK(m.av.at(q, k));
    }

    // receptive fields expand with the block index
    for (int k = 1; k < l.K; ++k) {
        long q_lo = block_token_ranges(l, k).audio.begin;
        long q_hi = block_token_ranges(l, k + 1).audio.begin;
        for (long j = 0; j < l.audio_token_count; ++j)
            if (m.aa.at(q_lo, j)) CHECK(m.aa.at(q_hi, j));
    }
}

TEST_CASE("mask predicate agrees with the matrices") {
    BlockLayout l = toy(2, 3, 5, 2, 3);
    FourWayMask m = build_masks(l);
    for (long q = 0; q < l.video_token_count; ++q)
        for (long k = 0; k < l.audio_token_count; ++k)
            CHECK(m.va.at(q, k) == mask_visible(Pathway::VA, q, k, l));
    for (long q = 0; q < l.audio_token_count; ++q)
        for (long k = 0; k < l.video_token_count; ++k)
            CHECK(m.av.at(q, k) == mask_visible(Pathway::AV, q, k, l));
}

TEST_CASE("causal_frontier counts match oracle mask rows") {
    BlockLayout l = toy(3, 3, 25, 4, 16);
    FourWayMask m = oracle_masks(l);

    FrontierCounts f1 = causal_frontier(l, 1);
    CHECK(f1.aa == 42);  // 16 sinks + 1 prefix + 25 intra-block
    CHECK(f1.aa == row_count(m.aa, block_token_ranges(l, 1).audio.begin));
    CHECK(f1.av == row_count(m.av, block_token_ranges(l, 1).audio.begin));
    CHECK(f1.vv == row_count(m.vv, block_token_ranges(l, 1).video.begin));
    CHECK(f1.va == row_count(m.va, block_token_ranges(l, 1).video.begin));

    FrontierCounts f2 = causal_frontier(l, 2);
    CHECK(f2.aa == 67);
    CHECK(f2.aa == row_count(m.aa, block_token_ranges(l, 2).audio.begin));

    BlockLayout l0 = toy(3, 3, 25, 4, 0);
    CHECK(causal_frontier(l0, 1).aa == 26);

    CHECK_THROWS_AS(causal_frontier(l, 0), std::out_of_range);
    CHECK_THROWS_AS(causal_frontier(l, l.K + 1), std::out_of_range);
}

TEST_CASE("sink keys add exactly S to every audio row") {
    BlockLayout with = toy(2, 3, 7, 2, 9);
    BlockLayout without = toy(2, 3, 7, 2, 0);
    FourWayMask mw = build_masks(with);
    FourWayMask mo = build_masks(without);
    for (long q = 0; q < without.audio_token_count; ++q)
        CHECK(row_count(mw.aa, q + with.S) == row_count(mo.aa, q) + with.S);
}

TEST_CASE("oracle refuses oversized layouts") {
    BlockLayout l = toy(4, 3, 25, 384, 16);
    CHECK_THROWS_AS(oracle_masks(l, 1000), std::length_error);
}

TEST_CASE("render produces one row per query") {
    BlockLayout l = toy(1, 2, 3, 1, 1);
    FourWayMask m = build_masks(l);
    std::string art = render_mask(m.aa);
    size_t lines = 0;
    for (char c : art)
        if (c == '\n') ++lines;
    CHECK(lines == static_cast<size_t>(l.audio_token_count));
}
