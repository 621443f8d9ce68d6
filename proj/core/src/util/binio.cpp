#include "fluidfm/util/binio.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fluidfm/util/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace fluidfm {

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f32_array(std::ostream& os, const std::vector<float>& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  require(bool(is), Err::IoError, "unexpected end of stream reading u32");
  return v;
}

uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  require(bool(is), Err::IoError, "unexpected end of stream reading u64");
  return v;
}

std::vector<float> read_f32_array(std::istream& is, size_t count) {
  std::vector<float> v(count);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  require(bool(is), Err::IoError, "unexpected end of stream reading f32 array");
  return v;
}

std::string read_string(std::istream& is) {
  const uint64_t n = read_u64(is);
  require(n < (1ULL << 32), Err::IoError, "implausible string length");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  require(bool(is), Err::IoError, "unexpected end of stream reading string");
  return s;
}

void write_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

void expect_magic(std::istream& is, const char magic[4], const std::string& what) {
  char buf[4] = {0, 0, 0, 0};
  is.read(buf, 4);
  require(bool(is) && std::memcmp(buf, magic, 4) == 0, Err::IoError,
          "bad magic for " + what);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.is_open(), Err::IoError, "cannot open for write: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.is_open(), Err::IoError, "cannot open for read: " + path);
  return is;
}

}  // namespace fluidfm
