#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avstream/alignment.h"

namespace avs {

// Boolean attention matrix, query rows by key columns.
struct MaskMatrix {
    size_t n_q = 0;
    size_t n_k = 0;
    std::vector<uint8_t> bits;

    MaskMatrix() = default;
    MaskMatrix(size_t q, size_t k) : n_q(q), n_k(k), bits(q * k, 0) {}
    bool at(size_t q, size_t k) const { return bits[q * n_k + k] != 0; }
    void set(size_t q, size_t k, bool v) { bits[q * n_k + k] = v ? 1 : 0; }
    bool operator==(const MaskMatrix& o) const {
        return n_q == o.n_q && n_k == o.n_k && bits == o.bits;
    }
};

// The four block-causal pathways. Key visibility is purely a function of
// macro-block indices: a key is visible iff its block is <= the query's
// block, which makes the prefix (block 0, including sinks) visible to
// every query and intra-block attention fully bidirectional.
struct FourWayMask {
    BlockLayout layout;
    MaskMatrix vv;  // video queries  -> video keys
    MaskMatrix aa;  // audio queries  -> audio keys
    MaskMatrix va;  // video queries  -> audio keys
    MaskMatrix av;  // audio queries  -> video keys
};

FourWayMask build_masks(const BlockLayout& layout);

// All-true masks at the same shapes: the bidirectional (mask-free) regime.
FourWayMask all_visible_masks(const BlockLayout& layout);

// Independent O(n^2) re-derivation used as the definitional oracle. Block
// ids are rebuilt by enumerating block extents token by token; no code is
// shared with build_masks. Token counts above the cap raise an error.
FourWayMask oracle_masks(const BlockLayout& layout, size_t token_cap = 10000);

// Predicate form for streaming, where full matrices cannot be materialized.
enum class Pathway { VV, AA, VA, AV };

bool mask_visible(Pathway p, long q, long k, const BlockLayout& layout);

// Visible-key counts per pathway for the earliest query of block k
// (audio-side counts use the first audio token of the block, video-side
// counts the first video token). Drives the stability diagnostics.
struct FrontierCounts {
    long aa = 0;  // audio query: visible audio keys (sinks included)
    long av = 0;  // audio query: visible video keys
    long vv = 0;  // video query: visible video keys
    long va = 0;  // video query: visible audio keys
};

FrontierCounts causal_frontier(const BlockLayout& layout, int k);

// Compact textual rendering ('#' visible, '.' hidden) for eyeballing
// small masks; row = query, column = key.
std::string render_mask(const MaskMatrix& m);

}  // namespace avs
