#include "fluidfm/provenance.hpp"

#include <nlohmann/json.hpp>

namespace fluidfm {

using nlohmann::json;

std::string TrainingManifest::to_json() const {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"camera", e.camera_id},
                   {"t", e.time_index},
                   {"source", e.source},
                   {"reliability", e.reliability},
                   {"round", e.round}});
  }
  return arr.dump();
}

TrainingManifest TrainingManifest::from_json(const std::string& text) {
  TrainingManifest m;
  for (const auto& item : json::parse(text)) {
    m.entries.push_back({item.at("camera").get<int>(), item.at("t").get<int64_t>(),
                         item.at("source").get<std::string>(),
                         item.at("reliability").get<double>(), item.at("round").get<int>()});
  }
  return m;
}

}  // namespace fluidfm
