#pragma once

#include <map>
#include <string>
#include <vector>

namespace fluidfm {

/// Flat `key = value` configuration text with `#` comments. Keys use dots for
/// grouping (scene.nf, field.lambda_transport). Serialization is sorted so a
/// config has one canonical byte representation (hashable).
class KeyVal {
 public:
  static KeyVal parse(const std::string& text);
  static KeyVal load(const std::string& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;                    // raises ConfigError if absent
  std::string get_or(const std::string& key, std::string def) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int_or(const std::string& key, int64_t def) const;
  double get_real(const std::string& key) const;
  double get_real_or(const std::string& key, double def) const;
  bool get_bool_or(const std::string& key, bool def) const;

  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, int64_t v);
  void set_real(const std::string& key, double v);

  std::string serialize() const;
  void save(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace fluidfm
