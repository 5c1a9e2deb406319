#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fusionnet/tensor.hpp"

namespace fusionnet {

std::string base64_encode(const uint8_t* data, size_t size);
std::vector<uint8_t> base64_decode(const std::string& text);

/// Checkpoint document: {"version":1, "params": {name: {"shape": [...],
/// "data_b64": <little-endian 64-bit floats>}}}. Keys are sorted, so the
/// same parameters always serialize to the same bytes.
std::string checkpoint_to_json(const std::map<std::string, Tensor>& params);
std::map<std::string, Tensor> checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& params);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace fusionnet
