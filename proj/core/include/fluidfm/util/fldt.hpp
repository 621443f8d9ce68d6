#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fluidfm::fldt {

/// The FLDT container: magic "FLDT", format version, a length-prefixed UTF-8
/// metadata string (JSON text), then the raw little-endian f32 payload in
/// row-major dims order. Trajectories and video frame stacks share it.
void write(const std::string& path, const std::vector<int64_t>& dims,
           const std::vector<float>& values, const std::string& metadata_json);

struct Payload {
  std::vector<int64_t> dims;
  std::vector<float> values;
  std::string metadata_json;
};

Payload read(const std::string& path);

}  // namespace fluidfm::fldt
