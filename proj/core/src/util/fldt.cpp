#include "fluidfm/util/fldt.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "fluidfm/util/binio.hpp"
#include "fluidfm/util/errors.hpp"

namespace fluidfm::fldt {

namespace {
constexpr char kMagic[4] = {'F', 'L', 'D', 'T'};
constexpr uint32_t kVersion = 1;
}  // namespace

void write(const std::string& path, const std::vector<int64_t>& dims,
           const std::vector<float>& values, const std::string& metadata_json) {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  require(n == int64_t(values.size()), Err::ShapeMismatch, "fldt payload size mismatch");
  // dims ride inside the metadata so the payload length is self-describing
  nlohmann::json meta = nlohmann::json::parse(metadata_json);
  meta["dims"] = dims;
  auto os = open_out(path);
  write_magic(os, kMagic);
  write_u32(os, kVersion);
  write_string(os, meta.dump());
  write_f32_array(os, values);
  require(bool(os), Err::IoError, "short write: " + path);
}

Payload read(const std::string& path) {
  auto is = open_in(path);
  expect_magic(is, kMagic, path);
  const uint32_t version = read_u32(is);
  require(version == kVersion, Err::IoError, "unsupported fldt version in " + path);
  Payload p;
  p.metadata_json = read_string(is);
  const auto meta = nlohmann::json::parse(p.metadata_json);
  p.dims = meta.at("dims").get<std::vector<int64_t>>();
  int64_t n = 1;
  for (int64_t d : p.dims) n *= d;
  p.values = read_f32_array(is, size_t(n));
  return p;
}

}  // namespace fluidfm::fldt
