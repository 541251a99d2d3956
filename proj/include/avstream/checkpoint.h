#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "avstream/model.h"

namespace avs {

// Little-endian binary container: magic 'AVSC', u32 version, u64 manifest
// length, manifest JSON (meta object + tensor directory with byte offsets
// into the data section), then raw f64 arrays. Used for checkpoints,
// latent dumps and stream chunks alike.
struct Container {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(const std::string& name, Tensor t) { tensors.emplace_back(name, std::move(t)); }
    const Tensor* find(const std::string& name) const;

    void save(const std::string& path) const;
    static Container load(const std::string& path);
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Full model checkpoint: config in meta, one tensor per parameter.
void save_checkpoint(const std::string& path, const DualStreamModel& model,
                     const nlohmann::json& extra_meta = {});

// Loads into a model built from the stored config. Throws config_error if
// `expected` is given and differs from the stored config.
DualStreamModel load_checkpoint(const std::string& path, nlohmann::json* meta_out = nullptr);
void load_checkpoint_into(const std::string& path, DualStreamModel& model,
                          nlohmann::json* meta_out = nullptr);

uint64_t file_hash(const std::string& path);

}  // namespace avs
