#pragma once

#include "opengan/nn/layers.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace opengan {

/// Named float tensors plus a JSON header (config, provenance, model kind).
///
/// File layout: "OGANCKPT", u32 version, u64 header bytes, header text,
/// u64 tensor count, then per tensor: u32 name bytes, name, u32 rank,
/// i64 dims[rank], float data. Host byte order.
struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;

    const nn::Tensor<float>* find(const std::string& name) const;
    /// Copies every parameter and buffer of `reg` under `prefix`.
    void store(const nn::ParamRegistry<float>& reg, const std::string& prefix = "");
    /// Writes the stored values back into `reg`; missing names or shape
    /// mismatches throw.
    void restore(const nn::ParamRegistry<float>& reg, const std::string& prefix = "") const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 16 hex digits of the FNV-1a hash of the canonical JSON dump.
std::string json_hash(const nlohmann::json& value);

}  // namespace opengan
