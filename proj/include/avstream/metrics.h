#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include "avstream/data.h"
#include "avstream/model.h"

namespace avs {

// Probe queries for stability diagnostics: the first token of each
// standard block, where the causal receptive field is at its smallest.
struct ProbeSet {
    std::vector<long> audio_rows;
    std::vector<long> video_rows;

    static ProbeSet standard(const BlockLayout& layout);
};

// Forward-only attention measurement at the probe queries.
std::vector<AttnProbeRecord> attention_diagnostics(const DualStreamModel& model,
                                                   const BlockLayout& layout,
                                                   const JointState& st,
                                                   const FourWayMask& masks,
                                                   bool reduced_softmax = false);

// Mean probe entropy over the A->A pathway across layers and probes.
double mean_audio_entropy(const std::vector<AttnProbeRecord>& records);

// Running ||grad|| tracker with a latching NaN flag: once a non-finite
// value is seen the run stays marked.
struct GradNormTracker {
    double last = 0.0;
    double max_norm = 0.0;
    bool nan_latched = false;

    void record(double norm) {
        last = norm;
        if (!std::isfinite(norm)) {
            nan_latched = true;
            return;
        }
        if (norm > max_norm) max_norm = norm;
    }
};

// One-sided sign test: P(Binomial(n, 1/2) >= wins). Ties dropped upstream.
double sign_test_p(int wins, int n);

// One-sided Mann-Whitney U (normal approximation): small p supports
// "samples in `hi` are stochastically larger than samples in `lo`".
double mann_whitney_p(const std::vector<double>& hi, const std::vector<double>& lo);

// Mean one-step velocity loss of `student` against the frozen `reference`
// field at flow time t, over a fixed held-out seed set. The reference runs
// mask-free on its own sink-free layout.
double eval_loss_at(double t, const DualStreamModel& student, const BlockLayout& student_layout,
                    const FourWayMask& student_masks, const DualStreamModel& reference,
                    const WorldSpec& world, int K, const std::vector<uint64_t>& seeds,
                    double lambda_v, double lambda_a, bool reduced_softmax = false);

class Stopwatch {
public:
    Stopwatch() : start_(clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }
    void reset() { start_ = clock::now(); }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_;
};

}  // namespace avs
