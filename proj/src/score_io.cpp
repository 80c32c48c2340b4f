#include "attrib/score_io.hpp"

#include <fstream>
#include <limits>

#include "attrib/binary_io.hpp"
#include "attrib/digest.hpp"
#include "attrib/errors.hpp"

namespace attrib {

void write_scores(std::ostream& os, const ScoreMatrix& s) {
  s.validate();
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (s.test_ids.size() > kMax || s.train_ids.size() > kMax) {
    throw DimensionError("score matrix too large for TDAS");
  }
  binary::put_bytes(os, "TDAS");
  binary::put_u32(os, kScoreFormatVersion);
  const char tag = static_cast<char>(s.method);
  os.write(&tag, 1);
  binary::put_u32(os, static_cast<std::uint32_t>(s.test_ids.size()));
  binary::put_u32(os, static_cast<std::uint32_t>(s.train_ids.size()));
  for (auto id : s.test_ids) binary::put_u64(os, id);
  for (auto id : s.train_ids) binary::put_u64(os, id);
  const double* data = s.scores.data();
  for (Eigen::Index i = 0; i < s.scores.size(); ++i) binary::put_f64(os, data[i]);
}

ScoreMatrix read_scores(std::istream& is) {
  binary::expect_magic(is, "TDAS");
  const std::uint32_t version = binary::get_u32(is, "version");
  if (version != kScoreFormatVersion) {
    throw FormatError("unsupported score file version " + std::to_string(version));
  }
  char tag = 0;
  binary::read_exact(is, &tag, 1, "method tag");
  ScoreMatrix s;
  const auto t = static_cast<std::uint8_t>(tag);
  if (t < 1 || t > 4) throw FormatError("unknown method tag " + std::to_string(t));
  s.method = static_cast<Method>(t);
  const std::uint32_t m = binary::get_u32(is, "test count");
  const std::uint32_t n = binary::get_u32(is, "train count");
  if (n != 0 && m > kMaxScoreEntries / n) throw FormatError("score matrix dimensions too large");
  s.test_ids.resize(m);
  s.train_ids.resize(n);
  for (auto& id : s.test_ids) id = binary::get_u64(is, "test ids");
  for (auto& id : s.train_ids) id = binary::get_u64(is, "train ids");
  s.scores.resize(m, n);
  double* data = s.scores.data();
  for (Eigen::Index i = 0; i < s.scores.size(); ++i) data[i] = binary::get_f64(is, "scores");
  binary::expect_end(is);
  s.validate();
  return s;
}

void save_scores(const std::string& path, const ScoreMatrix& scores) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  write_scores(os, scores);
  if (!os) throw Error("write failed for " + path);
}

ScoreMatrix load_scores(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  return read_scores(is);
}

void write_scores_csv(std::ostream& os, const ScoreMatrix& s) {
  os << "test_id";
  for (auto id : s.train_ids) os << ',' << id;
  os << '\n';
  for (std::size_t r = 0; r < s.test_ids.size(); ++r) {
    os << s.test_ids[r];
    for (std::size_t c = 0; c < s.train_ids.size(); ++c) {
      os << ',' << format_double(s.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    os << '\n';
  }
}

}  // namespace attrib
