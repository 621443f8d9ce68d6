#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fluidfm {

/// SHA-256 of a byte string, hex-encoded. Used for content hashes in run
/// manifests so outputs can be traced to the exact inputs that produced them.
std::string sha256_hex(const std::string& bytes);

/// Hash of a file's contents; raises IoError if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace fluidfm
