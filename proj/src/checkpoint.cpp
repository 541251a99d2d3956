#include "avstream/checkpoint.h"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "avstream/errors.h"

namespace avs {

namespace {
constexpr char kMagic[4] = {'A', 'V', 'S', 'C'};
constexpr uint32_t kVersion = 1;
}  // namespace

const Tensor* Container::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void Container::save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["meta"] = meta;
    manifest["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        manifest["tensors"].push_back({{"name", name},
                                       {"dtype", "f64"},
                                       {"shape", {t.rows, t.cols}},
                                       {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
    const std::string mjson = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(kMagic, 4);
    uint32_t ver = kVersion;
    f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    uint64_t mlen = mjson.size();
    f.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    f.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
    for (const auto& [name, t] : tensors)
        f.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("write failed: " + path);
}

Container Container::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad container magic in " + path);
    uint32_t ver = 0;
    f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (ver != kVersion) throw std::runtime_error("unsupported container version in " + path);
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    std::string mjson(mlen, '\0');
    f.read(mjson.data(), static_cast<std::streamsize>(mlen));
    nlohmann::json manifest = nlohmann::json::parse(mjson);

    Container c;
    c.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& e : manifest.at("tensors")) {
        if (e.at("dtype").get<std::string>() != "f64")
            throw std::runtime_error("unsupported dtype in " + path);
        Tensor t(e.at("shape")[0].get<size_t>(), e.at("shape")[1].get<size_t>());
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!f) throw std::runtime_error("truncated container: " + path);
        c.add(e.at("name").get<std::string>(), std::move(t));
    }
    return c;
}

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return {{"layers", cfg.layers},
            {"d_v", cfg.d_v},
            {"d_a", cfg.d_a},
            {"heads_v", cfg.heads_v},
            {"heads_a", cfg.heads_a},
            {"cross_heads", cfg.cross_heads},
            {"cross_head_dim", cfg.cross_head_dim},
            {"ffn_mult", cfg.ffn_mult},
            {"sink_tokens", cfg.sink_tokens},
            {"stabilizer", stabilizer_name(cfg.stabilizer)},
            {"cond_classes", cfg.cond_classes},
            {"cond_dim", cfg.cond_dim},
            {"rope_base", cfg.rope_base},
            {"video_channels", cfg.video_channels},
            {"audio_channels", cfg.audio_channels},
            {"tokens_per_video_frame", cfg.tokens_per_video_frame}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.d_v = j.at("d_v").get<int>();
    cfg.d_a = j.at("d_a").get<int>();
    cfg.heads_v = j.at("heads_v").get<int>();
    cfg.heads_a = j.at("heads_a").get<int>();
    cfg.cross_heads = j.at("cross_heads").get<int>();
    cfg.cross_head_dim = j.at("cross_head_dim").get<int>();
    cfg.ffn_mult = j.at("ffn_mult").get<int>();
    cfg.sink_tokens = j.at("sink_tokens").get<int>();
    cfg.stabilizer = stabilizer_from_name(j.at("stabilizer").get<std::string>());
    cfg.cond_classes = j.at("cond_classes").get<int>();
    cfg.cond_dim = j.at("cond_dim").get<int>();
    cfg.rope_base = j.at("rope_base").get<double>();
    cfg.video_channels = j.at("video_channels").get<int>();
    cfg.audio_channels = j.at("audio_channels").get<int>();
    cfg.tokens_per_video_frame = j.at("tokens_per_video_frame").get<int>();
    cfg.validate();
    return cfg;
}

void save_checkpoint(const std::string& path, const DualStreamModel& model,
                     const nlohmann::json& extra_meta) {
    Container c;
    c.meta = extra_meta.is_null() ? nlohmann::json::object() : extra_meta;
    c.meta["model_config"] = model_config_to_json(model.cfg);
    for (const ParamTensor* p : model.params.all()) c.add(p->name, p->value);
    c.save(path);
}

DualStreamModel load_checkpoint(const std::string& path, nlohmann::json* meta_out) {
    Container c = Container::load(path);
    DualStreamModel model;
    model.cfg = model_config_from_json(c.meta.at("model_config"));
    model.init(0);
    for (ParamTensor* p : model.params.all()) {
        const Tensor* t = c.find(p->name);
        if (t == nullptr) throw config_error("checkpoint missing parameter: " + p->name);
        if (!t->same_shape(p->value))
            throw config_error("checkpoint shape mismatch for: " + p->name);
        p->value = *t;
    }
    if (meta_out != nullptr) *meta_out = c.meta;
    return model;
}

void load_checkpoint_into(const std::string& path, DualStreamModel& model,
                          nlohmann::json* meta_out) {
    nlohmann::json meta;
    DualStreamModel loaded = load_checkpoint(path, &meta);
    if (model_config_to_json(loaded.cfg) != model_config_to_json(model.cfg))
        throw config_error("checkpoint config does not match the requested model config");
    for (ParamTensor* p : model.params.all()) p->value = loaded.params.get(p->name).value;
    if (meta_out != nullptr) *meta_out = meta;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        const std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (f.eof()) break;
    }
    return h;
}

}  // namespace avs
