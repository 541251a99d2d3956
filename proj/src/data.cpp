#include "avstream/data.h"

#include <cmath>

#include "avstream/errors.h"
#include "avstream/rng.h"

namespace avs {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct ClassParams {
    double f1, f2;       // driver frequencies (Hz)
    double carrier;      // audio high-frequency carrier (Hz)
    double sig_phase;    // spatial signature phase
};

ClassParams class_params(int label) {
    ClassParams p;
    p.f1 = 0.22 + 0.11 * label;
    p.f2 = 0.53 + 0.07 * label;
    p.carrier = 6.0 + 1.3 * label;
    p.sig_phase = 0.9 * label;
    return p;
}

// Smooth step for event-driven video motion; derivative spikes at t=0.
double event_step(double x) { return std::tanh(x); }

}  // namespace

void WorldSpec::validate() const {
    if (classes < 1) throw config_error("world.classes must be >= 1");
    if (video_channels < 1 || audio_channels < 2)
        throw config_error("world channels: video >= 1, audio >= 2 (one carrier channel)");
    if (event_rate < 0 || event_width <= 0 || coupling < 0 || noise < 0)
        throw config_error("world: negative rates/gains are not allowed");
}

LatentPair sample_pair(const WorldSpec& spec, int label, int K, const RateSpec& rates,
                       uint64_t seed) {
    spec.validate();
    rates.validate();
    if (label < 0 || label >= spec.classes) throw config_error("sample_pair: label out of range");
    auto [nv, na] = latent_lengths(rates, K);
    const int tpvf = rates.tokens_per_video_frame;
    const ClassParams cp = class_params(label);

    Rng rng(mix_seed(seed, tag_hash("world"), static_cast<uint64_t>(label) * 131 + K));
    const double phi1 = rng.uniform(0, kTwoPi);
    const double phi2 = rng.uniform(0, kTwoPi);
    const double phic = rng.uniform(0, kTwoPi);

    // shared event times
    std::poisson_distribution<int> pois(spec.event_rate * std::max(K, 1));
    int n_events = K > 0 ? pois(rng.engine()) : 0;
    std::vector<double> events(n_events);
    for (double& t : events) t = rng.uniform(0.0, static_cast<double>(K));

    auto z = [&](double t) {
        return 0.8 * std::sin(kTwoPi * cp.f1 * t + phi1) + 0.5 * std::sin(kTwoPi * cp.f2 * t + phi2);
    };
    auto z2 = [&](double t) {
        return 0.7 * std::sin(kTwoPi * cp.f2 * t + phi2 + 1.1) +
               0.4 * std::cos(kTwoPi * cp.f1 * t + phi1);
    };
    auto envelope = [&](double t) {
        double e = 0.0;
        for (double te : events) {
            const double d = (t - te) / spec.event_width;
            e += std::exp(-0.5 * d * d);
        }
        return e;
    };
    auto drive = [&](double t) {
        double d = z(t);
        for (double te : events) d += spec.coupling * 0.4 * event_step((t - te) / spec.event_width);
        return d;
    };

    LatentPair pair;
    pair.label = label;
    pair.seed = seed;
    pair.K = K;
    pair.rates = rates;
    pair.video = Tensor(nv * tpvf, spec.video_channels);
    pair.audio = Tensor(na, spec.audio_channels);

    for (long n = 0; n < nv; ++n) {
        const double t = static_cast<double>(n) / rates.f_v;
        const double d = drive(t), w = z2(t);
        for (int s = 0; s < tpvf; ++s) {
            double* row = pair.video.row(n * tpvf + s);
            const double s1 = std::sin(kTwoPi * (s + 1) / (tpvf + 1));
            const double s2 = std::cos(kTwoPi * (s + 1) / (tpvf + 2));
            for (int c = 0; c < spec.video_channels; ++c) {
                const double alpha = 0.75 * std::cos(M_PI * c / spec.video_channels);
                const double beta = 0.55 * std::sin(M_PI * (c + 1) / spec.video_channels);
                const double sig =
                    0.6 * std::sin(cp.sig_phase + kTwoPi * (s * spec.video_channels + c + 1) /
                                                      (tpvf * spec.video_channels + 1));
                row[c] = alpha * d * s1 + beta * w * s2 + sig + spec.noise * rng.normal();
            }
        }
    }

    const int hf = spec.audio_channels - 1;
    for (long m = 0; m < na; ++m) {
        const double t = static_cast<double>(m) / rates.f_a;
        double* row = pair.audio.row(m);
        for (int c = 0; c < hf; ++c) {
            const double gamma = 0.8 * std::cos(M_PI * c / hf + 0.3);
            const double amean =
                0.5 * std::cos(kTwoPi * (label + 1) * (c + 1) / (spec.classes * hf + 1));
            row[c] = gamma * z(t) + amean + spec.noise * rng.normal();
        }
        row[hf] = std::sin(kTwoPi * cp.carrier * t + phic) *
                      (0.3 + spec.coupling * 0.5 * envelope(t)) +
                  0.3 * spec.noise * rng.normal();
    }
    return pair;
}

double sync_score(const LatentPair& pair) {
    const int K = pair.K;
    if (K < 2) return 0.0;
    const int tpvf = pair.rates.tokens_per_video_frame;
    const int hf = static_cast<int>(pair.audio.cols) - 1;

    std::vector<double> env(K), motion(K);
    for (int k = 1; k <= K; ++k) {
        // audio frames of block k
        double ss = 0.0;
        long m0 = 1 + static_cast<long>(k - 1) * pair.rates.f_a;
        for (long m = m0; m < m0 + pair.rates.f_a; ++m) ss += pair.audio.at(m, hf) * pair.audio.at(m, hf);
        env[k - 1] = std::sqrt(ss / pair.rates.f_a);

        // video frames of block k: mean |v_n - v_{n-1}|
        double md = 0.0;
        long n0 = 1 + static_cast<long>(k - 1) * pair.rates.f_v;
        for (long n = n0; n < n0 + pair.rates.f_v; ++n) {
            double d = 0.0;
            for (int s = 0; s < tpvf; ++s)
                for (size_t c = 0; c < pair.video.cols; ++c)
                    d += std::fabs(pair.video.at(n * tpvf + s, c) -
                                   pair.video.at((n - 1) * tpvf + s, c));
            md += d / (tpvf * static_cast<double>(pair.video.cols));
        }
        motion[k - 1] = md / pair.rates.f_v;
    }

    double me = 0, mm = 0;
    for (int k = 0; k < K; ++k) {
        me += env[k];
        mm += motion[k];
    }
    me /= K;
    mm /= K;
    double se = 0, sm = 0, cov = 0;
    for (int k = 0; k < K; ++k) {
        se += (env[k] - me) * (env[k] - me);
        sm += (motion[k] - mm) * (motion[k] - mm);
        cov += (env[k] - me) * (motion[k] - mm);
    }
    if (se < 1e-12 || sm < 1e-12) return 0.0;  // degenerate constant signals
    return cov / std::sqrt(se * sm);
}

}  // namespace avs
