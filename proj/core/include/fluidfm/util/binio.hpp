#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fluidfm {

// Little-endian primitives for the FLDT / FMCK / NFLD container formats.

void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f32_array(std::ostream& os, const std::vector<float>& v);
/// Length-prefixed (u64) UTF-8 string.
void write_string(std::ostream& os, const std::string& s);

uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
std::vector<float> read_f32_array(std::istream& is, size_t count);
std::string read_string(std::istream& is);

void write_magic(std::ostream& os, const char magic[4]);
void expect_magic(std::istream& is, const char magic[4], const std::string& what);

/// Opens for binary write, throwing IoError on failure. Parent directories
/// must already exist.
std::ofstream open_out(const std::string& path);
std::ifstream open_in(const std::string& path);

}  // namespace fluidfm
