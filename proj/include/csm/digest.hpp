#pragma once

#include <string>
#include <string_view>

namespace csm::digest {

// SHA-256 hex digest of a byte string.
std::string sha256_hex(std::string_view data);

// Digest of a file's contents. Throws ValidationError when unreadable.
std::string sha256_file(const std::string& path);

}  // namespace csm::digest
