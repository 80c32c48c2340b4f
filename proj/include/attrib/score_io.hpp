#pragma once

#include <iosfwd>
#include <string>

#include "attrib/attributors.hpp"

namespace attrib {

inline constexpr std::uint32_t kScoreFormatVersion = 1;

/// TDAS layout: "TDAS", u32 version, u8 method tag, u32 m, u32 n, m test ids
/// and n train ids (u64), then m * n f64 scores row-major. All little-endian.
/// method_params are not part of the binary and read back empty.
void write_scores(std::ostream& os, const ScoreMatrix& scores);
ScoreMatrix read_scores(std::istream& is);

void save_scores(const std::string& path, const ScoreMatrix& scores);
ScoreMatrix load_scores(const std::string& path);

/// Header "test_id,<train ids...>", then one row per test example.
void write_scores_csv(std::ostream& os, const ScoreMatrix& scores);

}  // namespace attrib
