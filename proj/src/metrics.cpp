#include "avstream/metrics.h"

#include <algorithm>

#include "avstream/flow.h"
#include "avstream/masking.h"

namespace avs {

ProbeSet ProbeSet::standard(const BlockLayout& layout) {
    ProbeSet ps;
    for (int k = 1; k <= layout.K; ++k) {
        BlockRanges r = block_token_ranges(layout, k);
        ps.audio_rows.push_back(r.audio.begin);
        ps.video_rows.push_back(r.video.begin);
    }
    return ps;
}

std::vector<AttnProbeRecord> attention_diagnostics(const DualStreamModel& model,
                                                   const BlockLayout& layout,
                                                   const JointState& st,
                                                   const FourWayMask& masks,
                                                   bool reduced_softmax) {
    const RopeSet ropes = model.build_ropes(layout);
    ProbeSet ps = ProbeSet::standard(layout);
    std::vector<AttnProbeRecord> records;
    ForwardOptions opt;
    opt.reduced_softmax = reduced_softmax;
    opt.probe_audio_rows = ps.audio_rows;
    opt.probe_video_rows = ps.video_rows;
    opt.diagnostics = &records;
    Graph g(false);
    model.forward(g, layout, st, masks, ropes, opt);
    return records;
}

double mean_audio_entropy(const std::vector<AttnProbeRecord>& records) {
    double s = 0.0;
    long n = 0;
    for (const auto& r : records) {
        if (r.pathway != Pathway::AA) continue;
        s += r.stat.entropy;
        ++n;
    }
    return n > 0 ? s / n : 0.0;
}

double sign_test_p(int wins, int n) {
    if (n <= 0) return 1.0;
    // exact binomial tail at p = 1/2 via log factorials
    auto lchoose = [](int a, int b) {
        return std::lgamma(a + 1.0) - std::lgamma(b + 1.0) - std::lgamma(a - b + 1.0);
    };
    double p = 0.0;
    for (int k = wins; k <= n; ++k) p += std::exp(lchoose(n, k) - n * std::log(2.0));
    return std::min(1.0, p);
}

double mann_whitney_p(const std::vector<double>& hi, const std::vector<double>& lo) {
    const size_t n1 = hi.size(), n2 = lo.size();
    if (n1 == 0 || n2 == 0) return 1.0;
    double u = 0.0;
    for (double a : hi)
        for (double b : lo) {
            if (a > b) u += 1.0;
            else if (a == b) u += 0.5;
        }
    const double mean = 0.5 * n1 * n2;
    const double sd = std::sqrt(n1 * n2 * (n1 + n2 + 1.0) / 12.0);
    const double z = (u - mean) / sd;
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

double eval_loss_at(double t, const DualStreamModel& student, const BlockLayout& student_layout,
                    const FourWayMask& student_masks, const DualStreamModel& reference,
                    const WorldSpec& world, int K, const std::vector<uint64_t>& seeds,
                    double lambda_v, double lambda_a, bool reduced_softmax) {
    const BlockLayout ref_layout = BlockLayout::make(student_layout.rates, K, 0);
    const FourWayMask free_masks = all_visible_masks(ref_layout);

    const RopeSet student_ropes = student.build_ropes(student_layout);
    const RopeSet ref_ropes = reference.build_ropes(ref_layout);

    double total = 0.0;
    for (uint64_t seed : seeds) {
        const int label = static_cast<int>(seed % world.classes);
        LatentPair pair = sample_pair(world, label, K, student_layout.rates, seed);
        Rng nrng(seed, "eval_noise");
        Tensor eps_v = Tensor::randn(pair.video.rows, pair.video.cols, nrng);
        Tensor eps_a = Tensor::randn(pair.audio.rows, pair.audio.cols, nrng);
        JointState st = JointState::uniform_t(renoise(pair.video, eps_v, t),
                                              renoise(pair.audio, eps_a, t), label, t, K);

        Graph g(false);
        ForwardOptions opt;
        opt.reduced_softmax = reduced_softmax;
        VelocityVars vs = student.forward(g, student_layout, st, student_masks, student_ropes, opt);
        VelocityVars vr = reference.forward(g, ref_layout, st, free_masks, ref_ropes);
        const double lv = g.val(g.mse(vs.video, vr.video)).data[0];
        const double la = g.val(g.mse(vs.audio, vr.audio)).data[0];
        total += lambda_v * lv + lambda_a * la;
    }
    return seeds.empty() ? 0.0 : total / seeds.size();
}

}  // namespace avs
