#include "avstream/cache.h"

#include <algorithm>
#include <stdexcept>

#include "avstream/metrics.h"

namespace avs {

namespace {

Tensor concat_tensor_rows(const std::vector<const Tensor*>& parts) {
    size_t rows = 0, cols = 0;
    for (const Tensor* t : parts) {
        rows += t->rows;
        cols = std::max(cols, t->cols);
    }
    Tensor out(rows, cols);
    size_t r = 0;
    for (const Tensor* t : parts) {
        std::copy(t->data.begin(), t->data.end(), out.row(r));
        r += t->rows;
    }
    return out;
}

}  // namespace

KVCacheState::KVCacheState(int layers, int window_video, int window_audio)
    : layers_(layers), window_video_(window_video), window_audio_(window_audio) {
    if (layers < 1) throw config_error("KVCacheState: layers must be >= 1");
    if (window_video < 1 || window_audio < 1)
        throw config_error("KVCacheState: window must be >= 1 block");
}

void KVCacheState::set_prefix(ModalityKV video, ModalityKV audio) {
    if (has_prefix_) throw std::logic_error("prefix already set");
    if (video.self_k.size() != static_cast<size_t>(layers_) ||
        audio.self_k.size() != static_cast<size_t>(layers_))
        throw shape_error("prefix KV layer count mismatch");
    prefix_video_ = std::move(video);
    prefix_audio_ = std::move(audio);
    has_prefix_ = true;
    last_block_ = 0;
}

void KVCacheState::append_block(int k, ModalityKV video, ModalityKV audio) {
    if (!has_prefix_) throw std::logic_error("append_block before prefix");
    if (k != last_block_ + 1)
        throw std::logic_error("out-of-order append: expected block " +
                               std::to_string(last_block_ + 1) + ", got " + std::to_string(k));
    video_ring_.emplace_back(k, std::move(video));
    audio_ring_.emplace_back(k, std::move(audio));
    if (static_cast<int>(video_ring_.size()) > window_video_) {
        video_ring_.pop_front();
        ++evicted_video_;
    }
    if (static_cast<int>(audio_ring_.size()) > window_audio_) {
        audio_ring_.pop_front();
        ++evicted_audio_;
    }
    last_block_ = k;
    check_invariants();
}

KeyContext KVCacheState::assemble() const {
    if (!has_prefix_) throw std::logic_error("assemble before prefix");
    KeyContext ctx;
    for (int l = 0; l < layers_; ++l) {
        std::vector<const Tensor*> vk{&prefix_video_.self_k[l]}, vv{&prefix_video_.self_v[l]};
        std::vector<const Tensor*> vxk{&prefix_video_.cross_k[l]}, vxv{&prefix_video_.cross_v[l]};
        for (const auto& [b, kv] : video_ring_) {
            vk.push_back(&kv.self_k[l]);
            vv.push_back(&kv.self_v[l]);
            vxk.push_back(&kv.cross_k[l]);
            vxv.push_back(&kv.cross_v[l]);
        }
        ctx.vself_k.push_back(concat_tensor_rows(vk));
        ctx.vself_v.push_back(concat_tensor_rows(vv));
        ctx.vx_k.push_back(concat_tensor_rows(vxk));
        ctx.vx_v.push_back(concat_tensor_rows(vxv));

        std::vector<const Tensor*> ak{&prefix_audio_.self_k[l]}, av{&prefix_audio_.self_v[l]};
        std::vector<const Tensor*> axk{&prefix_audio_.cross_k[l]}, axv{&prefix_audio_.cross_v[l]};
        for (const auto& [b, kv] : audio_ring_) {
            ak.push_back(&kv.self_k[l]);
            av.push_back(&kv.self_v[l]);
            axk.push_back(&kv.cross_k[l]);
            axv.push_back(&kv.cross_v[l]);
        }
        ctx.aself_k.push_back(concat_tensor_rows(ak));
        ctx.aself_v.push_back(concat_tensor_rows(av));
        ctx.ax_k.push_back(concat_tensor_rows(axk));
        ctx.ax_v.push_back(concat_tensor_rows(axv));
    }
    return ctx;
}

std::vector<int> KVCacheState::resident_video_blocks() const {
    std::vector<int> out;
    for (const auto& [b, kv] : video_ring_) out.push_back(b);
    return out;
}

std::vector<int> KVCacheState::resident_audio_blocks() const {
    std::vector<int> out;
    for (const auto& [b, kv] : audio_ring_) out.push_back(b);
    return out;
}

long KVCacheState::resident_audio_rows(int layer) const {
    long rows = prefix_audio_.self_k[layer].rows;
    for (const auto& [b, kv] : audio_ring_) rows += kv.self_k[layer].rows;
    return rows;
}

long KVCacheState::resident_video_rows(int layer) const {
    long rows = prefix_video_.self_k[layer].rows;
    for (const auto& [b, kv] : video_ring_) rows += kv.self_k[layer].rows;
    return rows;
}

void KVCacheState::check_invariants() const {
    if (!has_prefix_) throw std::logic_error("cache invariant: prefix missing");
    auto check_ring = [&](const std::deque<std::pair<int, ModalityKV>>& ring, int window) {
        if (static_cast<int>(ring.size()) > window)
            throw std::logic_error("cache invariant: ring exceeds window");
        for (size_t i = 0; i < ring.size(); ++i) {
            if (i > 0 && ring[i].first != ring[i - 1].first + 1)
                throw std::logic_error("cache invariant: non-contiguous residency");
        }
        if (!ring.empty() && ring.back().first != last_block_)
            throw std::logic_error("cache invariant: ring out of sync with last block");
    };
    check_ring(video_ring_, window_video_);
    check_ring(audio_ring_, window_audio_);
}

Tensor block_noise(uint64_t seed, int block, int step, bool video_side, size_t rows, size_t cols) {
    Rng rng(mix_seed(seed, tag_hash(video_side ? "noise_v" : "noise_a"),
                     static_cast<uint64_t>(block) * 1024 + step));
    return Tensor::randn(rows, cols, rng);
}

namespace {

struct ChunkShapes {
    long v_rows, a_rows;
};

ChunkShapes chunk_shapes(const BlockLayout& layout, int k) {
    const long vframes = k == 0 ? 1 : layout.rates.f_v;
    const long aframes = k == 0 ? 1 : layout.rates.f_a;
    return {vframes * layout.rates.tokens_per_video_frame, aframes};
}

}  // namespace

std::vector<StreamEvent> generate_stream(const DualStreamModel& model, const BlockLayout& layout,
                                         const StreamOptions& opt) {
    opt.schedule.validate();
    const RopeSet ropes = model.build_ropes(layout);
    KVCacheState cache(model.cfg.layers, opt.window_video, opt.window_audio);

    std::vector<StreamEvent> events;
    Stopwatch stream_clock;

    for (int k = 0; k <= layout.K; ++k) {
        const double t_start = stream_clock.seconds();
        const ChunkShapes sh = chunk_shapes(layout, k);
        const int C_v = model.cfg.video_channels, C_a = model.cfg.audio_channels;

        KeyContext ctx;
        const bool have_ctx = k > 0;
        if (have_ctx) ctx = cache.assemble();

        Tensor x_v = block_noise(opt.seed, k, 0, true, sh.v_rows, C_v);
        Tensor x_a = block_noise(opt.seed, k, 0, false, sh.a_rows, C_a);

        const auto& times = opt.schedule.times;
        for (size_t i = 0; i < times.size(); ++i) {
            ChunkInput in{k, x_v, x_a, times[i], opt.label};
            Graph g(false);
            ChunkResult res =
                model.forward_chunk(g, layout, ropes, in, have_ctx ? &ctx : nullptr, false);
            Tensor x0_v = x0_from_velocity(x_v, g.val(res.video_velocity), times[i]);
            Tensor x0_a = x0_from_velocity(x_a, g.val(res.audio_velocity), times[i]);
            if (i + 1 < times.size()) {
                Tensor ev = block_noise(opt.seed, k, static_cast<int>(i) + 1, true, sh.v_rows, C_v);
                Tensor ea = block_noise(opt.seed, k, static_cast<int>(i) + 1, false, sh.a_rows, C_a);
                x_v = renoise(x0_v, ev, times[i + 1]);
                x_a = renoise(x0_a, ea, times[i + 1]);
            } else {
                x_v = std::move(x0_v);
                x_a = std::move(x0_a);
            }
        }

        // clean forward at t=0 produces this block's cache rows
        ChunkInput clean{k, x_v, x_a, 0.0, opt.label};
        Graph g(false);
        ChunkResult res =
            model.forward_chunk(g, layout, ropes, clean, have_ctx ? &ctx : nullptr, true);
        ModalityKV vkv{std::move(res.kv.vself_k), std::move(res.kv.vself_v),
                       std::move(res.kv.vx_k), std::move(res.kv.vx_v)};
        ModalityKV akv{std::move(res.kv.aself_k), std::move(res.kv.aself_v),
                       std::move(res.kv.ax_k), std::move(res.kv.ax_v)};
        if (k == 0)
            cache.set_prefix(std::move(vkv), std::move(akv));
        else
            cache.append_block(k, std::move(vkv), std::move(akv));

        StreamEvent ev;
        ev.block = k;
        ev.video = std::move(x_v);
        ev.audio = std::move(x_a);
        ev.t_start = t_start;
        ev.t_end = stream_clock.seconds();
        events.push_back(std::move(ev));
    }
    return events;
}

std::vector<StreamEvent> generate_reference(const DualStreamModel& model,
                                            const BlockLayout& layout, const StreamOptions& opt) {
    opt.schedule.validate();
    const int C_v = model.cfg.video_channels, C_a = model.cfg.audio_channels;

    std::vector<StreamEvent> events;
    Stopwatch stream_clock;
    std::vector<Tensor> clean_video, clean_audio;  // per emitted block

    for (int k = 0; k <= layout.K; ++k) {
        const double t_start = stream_clock.seconds();
        const ChunkShapes sh = chunk_shapes(layout, k);

        // sub-layout covering blocks 0..k; token positions and masks agree
        // with the full layout restricted to these blocks
        const BlockLayout sub = BlockLayout::make(layout.rates, k, layout.S);
        const FourWayMask masks = build_masks(sub);
        const RopeSet ropes = model.build_ropes(sub);

        Tensor x_v = block_noise(opt.seed, k, 0, true, sh.v_rows, C_v);
        Tensor x_a = block_noise(opt.seed, k, 0, false, sh.a_rows, C_a);

        auto assemble_state = [&](const Tensor& cur_v, const Tensor& cur_a, double t) {
            JointState st;
            st.video = Tensor(sub.video_token_count, C_v);
            st.audio = Tensor(sub.N_a, C_a);
            size_t vr = 0, ar = 0;
            for (int b = 0; b < k; ++b) {
                std::copy(clean_video[b].data.begin(), clean_video[b].data.end(),
                          st.video.row(vr));
                vr += clean_video[b].rows;
                std::copy(clean_audio[b].data.begin(), clean_audio[b].data.end(),
                          st.audio.row(ar));
                ar += clean_audio[b].rows;
            }
            std::copy(cur_v.data.begin(), cur_v.data.end(), st.video.row(vr));
            std::copy(cur_a.data.begin(), cur_a.data.end(), st.audio.row(ar));
            st.label = opt.label;
            st.t_block.assign(static_cast<size_t>(k) + 1, 0.0);
            st.t_block[k] = t;
            return st;
        };

        const auto& times = opt.schedule.times;
        const long vrow0 = k == 0 ? 0 : block_token_ranges(sub, k).video.begin;
        const long arow0 = k == 0 ? 0 : block_token_ranges(sub, k).audio.begin - sub.S;
        for (size_t i = 0; i < times.size(); ++i) {
            JointState st = assemble_state(x_v, x_a, times[i]);
            Graph g(false);
            VelocityVars vel = model.forward(g, sub, st, masks, ropes);
            // velocities for the current block only
            Tensor vv(sh.v_rows, C_v), va(sh.a_rows, C_a);
            for (long r = 0; r < sh.v_rows; ++r)
                for (int c = 0; c < C_v; ++c) vv.at(r, c) = g.val(vel.video).at(vrow0 + r, c);
            for (long r = 0; r < sh.a_rows; ++r)
                for (int c = 0; c < C_a; ++c) va.at(r, c) = g.val(vel.audio).at(arow0 + r, c);
            Tensor x0_v = x0_from_velocity(x_v, vv, times[i]);
            Tensor x0_a = x0_from_velocity(x_a, va, times[i]);
            if (i + 1 < times.size()) {
                Tensor ev = block_noise(opt.seed, k, static_cast<int>(i) + 1, true, sh.v_rows, C_v);
                Tensor ea = block_noise(opt.seed, k, static_cast<int>(i) + 1, false, sh.a_rows, C_a);
                x_v = renoise(x0_v, ev, times[i + 1]);
                x_a = renoise(x0_a, ea, times[i + 1]);
            } else {
                x_v = std::move(x0_v);
                x_a = std::move(x0_a);
            }
        }

        clean_video.push_back(x_v);
        clean_audio.push_back(x_a);

        StreamEvent ev;
        ev.block = k;
        ev.video = std::move(x_v);
        ev.audio = std::move(x_a);
        ev.t_start = t_start;
        ev.t_end = stream_clock.seconds();
        events.push_back(std::move(ev));
    }
    return events;
}

BenchResult bench_stream(const DualStreamModel& model, const BlockLayout& layout,
                         const StreamOptions& opt, bool use_cache, int repeats) {
    // warmup: a short stream primes allocators and caches
    {
        BlockLayout warm = BlockLayout::make(layout.rates, std::min(layout.K, 2), layout.S);
        StreamOptions wopt = opt;
        if (use_cache)
            generate_stream(model, warm, wopt);
        else
            generate_reference(model, warm, wopt);
    }

    std::vector<std::vector<double>> runs;
    double total = 0.0;
    for (int r = 0; r < std::max(1, repeats); ++r) {
        StreamOptions ropt = opt;
        ropt.seed = opt.seed + r;
        auto events = use_cache ? generate_stream(model, layout, ropt)
                                : generate_reference(model, layout, ropt);
        std::vector<double> times;
        for (const auto& e : events) times.push_back(e.t_end - e.t_start);
        runs.push_back(std::move(times));
        total += events.back().t_end;
    }

    BenchResult res;
    res.K = layout.K;
    res.window = opt.window_video;
    res.cached = use_cache;
    res.per_block_seconds.resize(layout.K + 1);
    for (int k = 0; k <= layout.K; ++k) {
        std::vector<double> xs;
        for (auto& run : runs) xs.push_back(run[k]);
        std::sort(xs.begin(), xs.end());
        res.per_block_seconds[k] = xs[xs.size() / 2];
    }
    res.ttfc_seconds = res.per_block_seconds[0] +
                       (layout.K >= 1 ? res.per_block_seconds[1] : 0.0);
    res.total_seconds = total / std::max(1, repeats);
    const double video_frames = static_cast<double>(layout.N_v);
    res.video_fps = video_frames / res.total_seconds;

    if (layout.K >= 3) {
        // least squares slope of per-block time over k = 2..K
        double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int k = 2; k <= layout.K; ++k) {
            const double x = k, y = res.per_block_seconds[k];
            n += 1;
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        const double mean = sy / n;
        res.slope_per_mean = mean > 0 ? slope / mean : 0.0;
    }
    return res;
}

}  // namespace avs
