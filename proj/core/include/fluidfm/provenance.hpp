#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fluidfm {

/// Where a training frame came from. Evaluations audit these records: a held
/// out camera or a real future frame in any manifest is a leak.
struct ProvenanceEntry {
  int camera_id = 0;
  int64_t time_index = 0;
  std::string source = "real";  // real | foundation_model | fluid_field
  double reliability = 0.0;     // calibration PSNR for augmented views
  int round = -1;               // co-training round for augmented views
};

struct TrainingManifest {
  std::vector<ProvenanceEntry> entries;

  void add_real(int camera_id, int64_t t) {
    entries.push_back({camera_id, t, "real", 0.0, -1});
  }
  void add(const ProvenanceEntry& e) { entries.push_back(e); }
  void merge(const TrainingManifest& other) {
    entries.insert(entries.end(), other.entries.begin(), other.entries.end());
  }

  bool uses_camera(int camera_id) const {
    for (const auto& e : entries) {
      if (e.camera_id == camera_id) return true;
    }
    return false;
  }

  /// Largest time index among real-source entries, -1 if none.
  int64_t max_real_time() const {
    int64_t mx = -1;
    for (const auto& e : entries) {
      if (e.source == "real") mx = std::max(mx, e.time_index);
    }
    return mx;
  }

  std::string to_json() const;
  static TrainingManifest from_json(const std::string& text);
};

}  // namespace fluidfm
