#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "rulemine/tape.hpp"

namespace rulemine {

/// Checkpoint container: "rf1" tag, then per parameter a name, shape header
/// and little-endian 32-bit reals. Serialization is byte-explicit, so files
/// are portable across hosts.
void save_checkpoint(const std::filesystem::path& path, const ad::ParamStore& params);

/// Loads into an existing store; every stored name must match a parameter of
/// identical shape and vice versa.
void load_checkpoint(const std::filesystem::path& path, ad::ParamStore& params);

/// Rounds every parameter through 32-bit precision, making in-memory values
/// identical to what a save/load round trip produces.
void quantize_params(ad::ParamStore& params);

/// Plain-text key=value sidecar (architecture echo, recorded metrics).
void write_meta(const std::filesystem::path& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_meta(const std::filesystem::path& path);

}  // namespace rulemine
