#pragma once

#include <string>

#include "selfscore/backend.hpp"

namespace selfscore {

// On-disk form of a NamedDelta: <dir>/manifest.json plus one raw
// little-endian float64 file per parameter. Round-trips bit-exactly.
void save_delta(const NamedDelta& delta, const std::string& dir);
NamedDelta load_delta(const std::string& dir);

}  // namespace selfscore
