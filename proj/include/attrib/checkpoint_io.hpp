#pragma once

#include <iosfwd>
#include <string>

#include "attrib/training.hpp"

namespace attrib {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// TDAC layout: "TDAC", u32 version, u32 header length, header text
/// (key=value lines), then param_count little-endian f64 values.
void write_checkpoint(std::ostream& os, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace attrib
