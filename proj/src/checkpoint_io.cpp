#include "attrib/checkpoint_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "attrib/binary_io.hpp"
#include "attrib/digest.hpp"
#include "attrib/errors.hpp"

namespace attrib {
namespace {

std::string header_text(const Checkpoint& c) {
  std::ostringstream os;
  os << "family=" << to_string(c.config.family) << '\n';
  os << "input_dim=" << c.config.input_dim << '\n';
  os << "num_classes=" << c.config.num_classes << '\n';
  os << "hidden_widths=";
  for (std::size_t i = 0; i < c.config.hidden_widths.size(); ++i) {
    if (i) os << ',';
    os << c.config.hidden_widths[i];
  }
  os << '\n';
  os << "activation=" << to_string(c.config.activation) << '\n';
  os << "param_count=" << c.config.param_count() << '\n';
  os << "train_seed=" << c.provenance.train_seed << '\n';
  os << "train_stream=" << c.provenance.train_stream << '\n';
  os << "schedule_digest=" << c.provenance.schedule_digest << '\n';
  os << "subset_id=" << c.provenance.subset_id << '\n';
  os << "epoch_index=" << c.provenance.epoch_index << '\n';
  if (c.provenance.kd) {
    os << "kd_alpha=" << format_double(c.provenance.kd->alpha) << '\n';
    os << "kd_temperature=" << format_double(c.provenance.kd->temperature) << '\n';
  }
  return os.str();
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("checkpoint header: bad integer for " + key + ": '" + text + "'");
  }
  return v;
}

double parse_f64(const std::string& key, const std::string& text) {
  double v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError("checkpoint header: bad number for " + key + ": '" + text + "'");
  }
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& checkpoint) {
  checkpoint.validate();
  const std::string header = header_text(checkpoint);
  binary::put_bytes(os, "TDAC");
  binary::put_u32(os, kCheckpointFormatVersion);
  binary::put_u32(os, static_cast<std::uint32_t>(header.size()));
  binary::put_bytes(os, header);
  for (Eigen::Index i = 0; i < checkpoint.params.size(); ++i) {
    binary::put_f64(os, checkpoint.params[i]);
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  binary::expect_magic(is, "TDAC");
  const std::uint32_t version = binary::get_u32(is, "version");
  if (version != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = binary::get_u32(is, "header length");
  std::string header(header_len, '\0');
  binary::read_exact(is, header.data(), header_len, "checkpoint header");

  std::map<std::string, std::string> kv;
  std::istringstream lines(header);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint header: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("checkpoint header: missing key " + key);
    return it->second;
  };

  Checkpoint c;
  c.config.family = parse_family(need("family"));
  c.config.input_dim = parse_u64("input_dim", need("input_dim"));
  c.config.num_classes = parse_u64("num_classes", need("num_classes"));
  const std::string& widths = need("hidden_widths");
  if (!widths.empty()) {
    std::istringstream ws(widths);
    std::string w;
    while (std::getline(ws, w, ',')) c.config.hidden_widths.push_back(parse_u64("hidden_widths", w));
  }
  c.config.activation = parse_activation(need("activation"));
  c.config.validate();
  const std::uint64_t count = parse_u64("param_count", need("param_count"));
  if (count != c.config.param_count()) {
    throw FormatError("checkpoint header: param_count disagrees with the architecture");
  }
  c.provenance.train_seed = parse_u64("train_seed", need("train_seed"));
  c.provenance.train_stream = parse_u64("train_stream", need("train_stream"));
  c.provenance.schedule_digest = need("schedule_digest");
  c.provenance.subset_id = need("subset_id");
  c.provenance.epoch_index = parse_u64("epoch_index", need("epoch_index"));
  if (kv.count("kd_alpha")) {
    KDConfig kd;
    kd.alpha = parse_f64("kd_alpha", need("kd_alpha"));
    kd.temperature = parse_f64("kd_temperature", need("kd_temperature"));
    c.provenance.kd = kd;
  }
  c.params.resize(static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    c.params[static_cast<Eigen::Index>(i)] = binary::get_f64(is, "parameters");
  }
  binary::expect_end(is);
  c.validate();
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  write_checkpoint(os, checkpoint);
  if (!os) throw Error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace attrib
