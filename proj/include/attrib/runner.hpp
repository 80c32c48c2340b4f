#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "attrib/dataset.hpp"
#include "attrib/run_config.hpp"

namespace attrib {

struct SplitData {
  Dataset train;
  Dataset test;
};

/// Loads the configured source and splits it: the first train_size rows
/// train, the next test_size rows test.
SplitData load_data(const DataSpec& spec, std::uint64_t seed);

/// Digest of the canonical config plus the SHA-256 of every input file.
std::string run_digest(const RunConfig& config);

struct RunOutcome {
  int exit_code = 0;
  std::filesystem::path directory;
  bool reused = false;
};

/// Executes the configured command. Artifacts go to
/// <out>/<command>/<digest>/ and a MANIFEST of their SHA-256 digests is
/// written last; a directory with a valid MANIFEST is reused, not recomputed.
/// One summary line per result row goes to `out`, progress to `log`.
RunOutcome run(const RunConfig& config, std::ostream& out, std::ostream& log);

/// True when every file listed in dir/MANIFEST exists with the listed digest.
bool manifest_valid(const std::filesystem::path& dir);

}  // namespace attrib
