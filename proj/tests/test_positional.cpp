#include <doctest.h>

#include <cmath>

#include "avstream/errors.h"
#include "avstream/positional.h"
#include "avstream/rng.h"

using namespace avs;

namespace {

BlockLayout toy(int K = 2, int S = 8) {
    return BlockLayout::make(RateSpec{3, 25, 4}, K, S);
}

double norm(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> randvec(Rng& rng, int n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST_CASE("sink rows are exact identities") {
    BlockLayout l = toy();
    RopePair rp = build_rope(l, 8, 10000.0, true);
    Rng rng(3, "rope");
    for (int s = 0; s < l.S; ++s) {
        auto x = randvec(rng, 8);
        auto y = apply_rope(rp.audio, s, x);
        for (int i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
    }
    // A0 sits at physical position 0: zero rotation is also the identity
    auto x = randvec(rng, 8);
    auto y = apply_rope(rp.audio, l.S, x);
    for (int i = 0; i < 8; ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("rotation preserves the norm everywhere") {
    BlockLayout l = toy();
    RopePair rp = build_rope(l, 16, 10000.0, true);
    Rng rng(5, "rope_norm");
    for (size_t q = 0; q < rp.audio.rows(); ++q) {
        auto x = randvec(rng, 16);
        CHECK(norm(apply_rope(rp.audio, q, x)) == doctest::Approx(norm(x)).epsilon(1e-10));
    }
    for (size_t q = 0; q < rp.video.rows(); ++q) {
        auto x = randvec(rng, 16);
        CHECK(norm(apply_rope(rp.video, q, x)) == doctest::Approx(norm(x)).epsilon(1e-10));
    }
}

TEST_CASE("relative phase depends only on the offset") {
    BlockLayout l = toy(3, 4);
    RopePair rp = build_rope(l, 8, 10000.0, true);
    Rng rng(7, "rope_rel");
    auto q = randvec(rng, 8);
    auto k = randvec(rng, 8);
    // audio content rows are uniformly spaced in ticks
    const long base = l.S;  // A0 row, position 0
    const long delta = 5;
    double ref = dot(apply_rope(rp.audio, base, q), apply_rope(rp.audio, base + delta, k));
    for (long shift = 1; shift + delta <= 20; shift += 3) {
        double v = dot(apply_rope(rp.audio, base + shift, q),
                       apply_rope(rp.audio, base + shift + delta, k));
        CHECK(v == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("video and audio share the physical time axis") {
    BlockLayout l = toy(2, 0);
    RopePair rp = build_rope(l, 8, 10000.0, true);
    // video frame f_v (one second) and audio frame f_a (one second) rotate identically
    const long video_row = static_cast<long>(l.rates.f_v) * l.rates.tokens_per_video_frame;
    const long audio_row = l.S + l.rates.f_a;
    Rng rng(9, "rope_axis");
    auto x = randvec(rng, 8);
    auto yv = apply_rope(rp.video, video_row, x);
    auto ya = apply_rope(rp.audio, audio_row, x);
    for (int i = 0; i < 8; ++i) CHECK(yv[i] == doctest::Approx(ya[i]).epsilon(1e-10));
}

TEST_CASE("incremental ablation changes only sink rows") {
    BlockLayout l = toy(2, 6);
    RopePair ident = build_rope(l, 8, 10000.0, true);
    RopePair incr = build_rope(l, 8, 10000.0, false);
    const int half = 4;
    for (size_t r = 0; r < ident.audio.rows(); ++r) {
        bool sink = r < static_cast<size_t>(l.S);
        bool same = true;
        for (int j = 0; j < half; ++j) {
            if (ident.audio.cos_row(r)[j] != incr.audio.cos_row(r)[j]) same = false;
            if (ident.audio.sin_row(r)[j] != incr.audio.sin_row(r)[j]) same = false;
        }
        CHECK(same == !sink);
    }
    // video table untouched by the flag
    for (size_t r = 0; r < ident.video.rows(); ++r)
        for (int j = 0; j < half; ++j)
            CHECK(ident.video.cos_row(r)[j] == incr.video.cos_row(r)[j]);
}

TEST_CASE("bad rope configs are rejected") {
    BlockLayout l = toy();
    CHECK_THROWS_AS(build_rope(l, 7, 10000.0, true), config_error);
    CHECK_THROWS_AS(build_rope(l, 8, 0.5, true), config_error);
    RopePair rp = build_rope(l, 8, 10000.0, true);
    CHECK_THROWS_AS(apply_rope(rp.audio, 0, std::vector<double>(6)), shape_error);
}
