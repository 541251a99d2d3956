#include "avstream/masking.h"

#include <stdexcept>

#include "avstream/errors.h"

namespace avs {

namespace {

MaskMatrix from_blocks(const std::vector<int>& qb, const std::vector<int>& kb) {
    MaskMatrix m(qb.size(), kb.size());
    for (size_t q = 0; q < qb.size(); ++q)
        for (size_t k = 0; k < kb.size(); ++k)
            m.set(q, k, kb[k] <= qb[q]);
    return m;
}

}  // namespace

FourWayMask build_masks(const BlockLayout& layout) {
    std::vector<int> vb(layout.video_token_count);
    std::vector<int> ab(layout.audio_token_count);
    for (long q = 0; q < layout.video_token_count; ++q) vb[q] = video_block_of(q, layout);
    for (long q = 0; q < layout.audio_token_count; ++q) ab[q] = audio_block_of(q, layout);

    FourWayMask m;
    m.layout = layout;
    m.vv = from_blocks(vb, vb);
    m.aa = from_blocks(ab, ab);
    m.va = from_blocks(vb, ab);
    m.av = from_blocks(ab, vb);
    return m;
}

FourWayMask all_visible_masks(const BlockLayout& layout) {
    const size_t nv = static_cast<size_t>(layout.video_token_count);
    const size_t na = static_cast<size_t>(layout.audio_token_count);
    FourWayMask m;
    m.layout = layout;
    m.vv = MaskMatrix(nv, nv);
    m.aa = MaskMatrix(na, na);
    m.va = MaskMatrix(nv, na);
    m.av = MaskMatrix(na, nv);
    std::fill(m.vv.bits.begin(), m.vv.bits.end(), 1);
    std::fill(m.aa.bits.begin(), m.aa.bits.end(), 1);
    std::fill(m.va.bits.begin(), m.va.bits.end(), 1);
    std::fill(m.av.bits.begin(), m.av.bits.end(), 1);
    return m;
}

FourWayMask oracle_masks(const BlockLayout& layout, size_t token_cap) {
    const size_t nv = static_cast<size_t>(layout.video_token_count);
    const size_t na = static_cast<size_t>(layout.audio_token_count);
    if (nv > token_cap || na > token_cap)
        throw std::length_error("oracle_masks: token axis exceeds enumeration cap");

    // Re-derive block ids by walking block extents token by token, with no
    // arithmetic shared with the production path.
    std::vector<int> vb, ab;
    vb.reserve(nv);
    ab.reserve(na);
    for (int i = 0; i < layout.rates.tokens_per_video_frame; ++i) vb.push_back(0);
    for (int k = 1; k <= layout.K; ++k)
        for (int f = 0; f < layout.rates.f_v; ++f)
            for (int i = 0; i < layout.rates.tokens_per_video_frame; ++i) vb.push_back(k);
    for (int s = 0; s < layout.S; ++s) ab.push_back(0);
    ab.push_back(0);  // A0
    for (int k = 1; k <= layout.K; ++k)
        for (int f = 0; f < layout.rates.f_a; ++f) ab.push_back(k);

    if (vb.size() != nv || ab.size() != na)
        throw std::logic_error("oracle_masks: enumeration does not cover the token axes");

    FourWayMask m;
    m.layout = layout;
    m.vv = MaskMatrix(nv, nv);
    m.aa = MaskMatrix(na, na);
    m.va = MaskMatrix(nv, na);
    m.av = MaskMatrix(na, nv);
    for (size_t q = 0; q < nv; ++q)
        for (size_t k = 0; k < nv; ++k) m.vv.set(q, k, vb[k] <= vb[q]);
    for (size_t q = 0; q < na; ++q)
        for (size_t k = 0; k < na; ++k) m.aa.set(q, k, ab[k] <= ab[q]);
    for (size_t q = 0; q < nv; ++q)
        for (size_t k = 0; k < na; ++k) m.va.set(q, k, ab[k] <= vb[q]);
    for (size_t q = 0; q < na; ++q)
        for (size_t k = 0; k < nv; ++k) m.av.set(q, k, vb[k] <= ab[q]);
    return m;
}

bool mask_visible(Pathway p, long q, long k, const BlockLayout& layout) {
    switch (p) {
        case Pathway::VV: return video_block_of(k, layout) <= video_block_of(q, layout);
        case Pathway::AA: return audio_block_of(k, layout) <= audio_block_of(q, layout);
        case Pathway::VA: return audio_block_of(k, layout) <= video_block_of(q, layout);
        case Pathway::AV: return video_block_of(k, layout) <= audio_block_of(q, layout);
    }
    return false;
}

FrontierCounts causal_frontier(const BlockLayout& layout, int k) {
    if (k < 1 || k > layout.K)
        throw std::out_of_range("causal_frontier: block index outside [1, K]");
    FrontierCounts c;
    // Everything in blocks <= k is visible; intra-block bidirectionality
    // makes the whole own block count.
    c.aa = layout.S + 1 + static_cast<long>(k) * layout.rates.f_a;
    c.av = (1 + static_cast<long>(k) * layout.rates.f_v) * layout.rates.tokens_per_video_frame;
    c.vv = c.av;
    c.va = c.aa;
    return c;
}

std::string render_mask(const MaskMatrix& m) {
    std::string out;
    out.reserve((m.n_k + 1) * m.n_q);
    for (size_t q = 0; q < m.n_q; ++q) {
        for (size_t k = 0; k < m.n_k; ++k) out.push_back(m.at(q, k) ? '#' : '.');
        out.push_back('\n');
    }
    return out;
}

}  // namespace avs
