#pragma once

#include <iosfwd>
#include <string>

#include "attrib/evaluation.hpp"

namespace attrib {

inline constexpr std::uint32_t kEnsembleFormatVersion = 1;

/// TDAE layout (little-endian): "TDAE", u32 version, u32 m, f64 alpha, then
/// per subset a u32 length and that many u64 ids, m u64 seeds, u32 test
/// count, the u64 test ids, and m x test-count f64 outputs row-major.
void write_ensemble(std::ostream& os, const SubsetEnsemble& ensemble);
SubsetEnsemble read_ensemble(std::istream& is);

void save_ensemble(const std::string& path, const SubsetEnsemble& ensemble);
SubsetEnsemble load_ensemble(const std::string& path);

}  // namespace attrib
