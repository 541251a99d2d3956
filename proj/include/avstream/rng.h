#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace avs {

// Mixes a root seed with a stream tag and index so every consumer of
// randomness gets an independent, reproducible stream. splitmix64 finalizer.
inline uint64_t mix_seed(uint64_t root, uint64_t a, uint64_t b = 0) {
    uint64_t z = root + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t tag_hash(std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    Rng(uint64_t root, std::string_view tag, uint64_t index = 0)
        : engine_(mix_seed(root, tag_hash(tag), index)) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    uint64_t next() { return engine_(); }
    size_t index(size_t n) { return n == 0 ? 0 : static_cast<size_t>(engine_() % n); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace avs
