#pragma once

#include <filesystem>
#include <json.hpp>

#include "lungcadex/nn/parameters.hpp"

namespace lungcadex::nn {

/// Single-file archive: magic "LCXCKPT1", u64 header length, JSON header,
/// u32 tensor count, then per tensor: u32 name length, name bytes, u32 rank,
/// rank x i32 dims, float32 values. All integers and floats little-endian.
struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header, const ParameterStore& store);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies tensors into a store with identical names and shapes; anything else is a ConfigError.
void load_parameters(const Checkpoint& checkpoint, ParameterStore& store);

/// Overwrites the parameters named in an archive, each of which must lie under one of
/// the prefixes and match a store entry in shape. Returns the number of tensors copied.
std::size_t import_parameters(const std::filesystem::path& path, ParameterStore& store,
                              const std::vector<std::string>& prefixes);

}  // namespace lungcadex::nn
