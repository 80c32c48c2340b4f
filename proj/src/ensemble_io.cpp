#include "attrib/ensemble_io.hpp"

#include <fstream>
#include <limits>

#include "attrib/binary_io.hpp"
#include "attrib/errors.hpp"

namespace attrib {

namespace {

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw DimensionError(std::string("ensemble ") + what + " too large for TDAE");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_ensemble(std::ostream& os, const SubsetEnsemble& e) {
  e.validate();
  binary::put_bytes(os, "TDAE");
  binary::put_u32(os, kEnsembleFormatVersion);
  binary::put_u32(os, checked_u32(e.size(), "subset count"));
  binary::put_f64(os, e.alpha);
  for (const auto& s : e.subsets) {
    binary::put_u32(os, checked_u32(s.size(), "subset"));
    for (auto id : s) binary::put_u64(os, id);
  }
  for (auto seed : e.seeds) binary::put_u64(os, seed);
  binary::put_u32(os, checked_u32(e.test_ids.size(), "test set"));
  for (auto id : e.test_ids) binary::put_u64(os, id);
  const double* data = e.outputs.data();
  for (Eigen::Index i = 0; i < e.outputs.size(); ++i) binary::put_f64(os, data[i]);
}

SubsetEnsemble read_ensemble(std::istream& is) {
  binary::expect_magic(is, "TDAE");
  const std::uint32_t version = binary::get_u32(is, "version");
  if (version != kEnsembleFormatVersion) {
    throw FormatError("unsupported ensemble version " + std::to_string(version));
  }
  SubsetEnsemble e;
  const std::uint32_t m = binary::get_u32(is, "subset count");
  e.alpha = binary::get_f64(is, "alpha");
  e.subsets.resize(m);
  for (auto& s : e.subsets) {
    const std::uint32_t len = binary::get_u32(is, "subset length");
    s.reserve(std::min<std::uint32_t>(len, 1u << 20));
    for (std::uint32_t i = 0; i < len; ++i) s.push_back(binary::get_u64(is, "subset ids"));
  }
  e.seeds.resize(m);
  for (auto& seed : e.seeds) seed = binary::get_u64(is, "seeds");
  const std::uint32_t t = binary::get_u32(is, "test count");
  e.test_ids.resize(t);
  for (auto& id : e.test_ids) id = binary::get_u64(is, "test ids");
  e.outputs.resize(m, t);
  double* data = e.outputs.data();
  for (Eigen::Index i = 0; i < e.outputs.size(); ++i) data[i] = binary::get_f64(is, "outputs");
  binary::expect_end(is);
  e.validate();
  return e;
}

void save_ensemble(const std::string& path, const SubsetEnsemble& ensemble) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  write_ensemble(os, ensemble);
  if (!os) throw Error("write failed for " + path);
}

SubsetEnsemble load_ensemble(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  return read_ensemble(is);
}

}  // namespace attrib
