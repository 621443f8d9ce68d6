#include "fluidfm/util/keyval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fluidfm/util/errors.hpp"

namespace fluidfm {
namespace {

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyVal KeyVal::parse(const std::string& text) {
  KeyVal kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos, Err::ConfigError,
            "line " + std::to_string(lineno) + " is not `key = value`: " + line);
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    require(!key.empty(), Err::ConfigError, "empty key on line " + std::to_string(lineno));
    kv.entries_[key] = value;
  }
  return kv;
}

KeyVal KeyVal::load(const std::string& path) {
  std::ifstream is(path);
  require(is.is_open(), Err::ConfigError, "cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str());
}

bool KeyVal::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyVal::get(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), Err::ConfigError, "missing config key: " + key);
  return it->second;
}

std::string KeyVal::get_or(const std::string& key, std::string def) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? def : it->second;
}

int64_t KeyVal::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    size_t pos = 0;
    const int64_t r = std::stoll(v, &pos);
    require(pos == v.size(), Err::ConfigError, "not an integer: " + key + " = " + v);
    return r;
  } catch (const FluidError&) {
    throw;
  } catch (...) {
    raise(Err::ConfigError, "not an integer: " + key + " = " + v);
  }
}

int64_t KeyVal::get_int_or(const std::string& key, int64_t def) const {
  return has(key) ? get_int(key) : def;
}

double KeyVal::get_real(const std::string& key) const {
  const std::string v = get(key);
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    require(pos == v.size(), Err::ConfigError, "not a real: " + key + " = " + v);
    return r;
  } catch (const FluidError&) {
    throw;
  } catch (...) {
    raise(Err::ConfigError, "not a real: " + key + " = " + v);
  }
}

double KeyVal::get_real_or(const std::string& key, double def) const {
  return has(key) ? get_real(key) : def;
}

bool KeyVal::get_bool_or(const std::string& key, bool def) const {
  if (!has(key)) return def;
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  raise(Err::ConfigError, "not a bool: " + key + " = " + v);
}

void KeyVal::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void KeyVal::set_int(const std::string& key, int64_t v) { entries_[key] = std::to_string(v); }

void KeyVal::set_real(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  entries_[key] = buf;
}

std::string KeyVal::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
  return os.str();
}

void KeyVal::save(const std::string& path) const {
  std::ofstream os(path);
  require(os.is_open(), Err::ConfigError, "cannot write config: " + path);
  os << serialize();
}

}  // namespace fluidfm
