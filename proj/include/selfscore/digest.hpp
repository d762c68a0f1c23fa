#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace selfscore {

// Hex-encoded SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// Hex-encoded SHA-256 of a file's contents.
std::string sha256_file(const std::string& path);

}  // namespace selfscore
