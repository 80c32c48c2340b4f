#include "attrib/data_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "attrib/digest.hpp"
#include "attrib/errors.hpp"

namespace attrib {

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& path, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw FormatError(path + ": truncated file while reading " + what);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::ifstream open_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return is;
}

}  // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       std::optional<std::size_t> limit) {
  auto img = open_binary(images_path);
  auto lab = open_binary(labels_path);
  const std::uint32_t img_magic = read_be32(img, images_path, "magic");
  if (img_magic != 0x00000803) throw FormatError(images_path + ": bad magic for an IDX image file");
  const std::uint32_t lab_magic = read_be32(lab, labels_path, "magic");
  if (lab_magic != 0x00000801) throw FormatError(labels_path + ": bad magic for an IDX label file");
  const std::uint32_t n_img = read_be32(img, images_path, "count");
  const std::uint32_t rows = read_be32(img, images_path, "rows");
  const std::uint32_t cols = read_be32(img, images_path, "cols");
  const std::uint32_t n_lab = read_be32(lab, labels_path, "count");
  if (n_img != n_lab) {
    throw FormatError("IDX count mismatch: " + std::to_string(n_img) + " images, " +
                      std::to_string(n_lab) + " labels");
  }
  if (rows == 0 || cols == 0) throw FormatError(images_path + ": zero image dimension");
  const std::size_t n = limit ? std::min<std::size_t>(*limit, n_img) : n_img;
  const std::size_t dim = std::size_t{rows} * cols;

  Dataset d;
  d.num_classes = 10;
  d.ids.resize(n);
  d.labels.resize(n);
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<unsigned char> pixels(dim);
  for (std::size_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(dim));
    if (static_cast<std::size_t>(img.gcount()) != dim) {
      throw FormatError(images_path + ": truncated file at image " + std::to_string(i));
    }
    for (std::size_t p = 0; p < dim; ++p) {
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = pixels[p] / 255.0;
    }
    const int label = lab.get();
    if (label == std::char_traits<char>::eof()) {
      throw FormatError(labels_path + ": truncated file at label " + std::to_string(i));
    }
    if (label > 9) throw FormatError(labels_path + ": label " + std::to_string(label) + " out of range");
    d.labels[i] = label;
    d.ids[i] = i;
  }
  d.validate();
  return d;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(const std::string& text, const std::string& where) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(where + ": cannot parse '" + text + "'");
  }
  return v;
}

}  // namespace

Dataset read_csv_dataset(std::istream& is, std::size_t num_classes, const std::string& source) {
  if (num_classes < 2) throw ConfigError("CSV dataset needs num_classes >= 2");
  std::vector<std::uint64_t> ids;
  std::vector<int> labels;
  std::vector<double> values;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (ids.empty() && line.rfind("id", 0) == 0) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split_commas(line);
    if (fields.size() < 3) throw FormatError(where + ": need id, label and at least one feature");
    if (width == 0) {
      width = fields.size() - 2;
    } else if (fields.size() - 2 != width) {
      throw FormatError(where + ": ragged row (" + std::to_string(fields.size() - 2) +
                        " features, expected " + std::to_string(width) + ")");
    }
    ids.push_back(parse_field<std::uint64_t>(fields[0], where));
    const int label = parse_field<int>(fields[1], where);
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw FormatError(where + ": label " + std::to_string(label) + " out of range");
    }
    labels.push_back(label);
    for (std::size_t f = 2; f < fields.size(); ++f) values.push_back(parse_field<double>(fields[f], where));
  }
  if (ids.empty()) throw FormatError(source + ": no data rows");
  Dataset d;
  d.num_classes = num_classes;
  d.ids = std::move(ids);
  d.labels = std::move(labels);
  d.features = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(d.ids.size()),
                                        static_cast<Eigen::Index>(width));
  d.validate();
  return d;
}

Dataset load_csv(const std::string& path, std::size_t num_classes) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_csv_dataset(is, num_classes, path);
}

void write_csv_dataset(std::ostream& os, const Dataset& data) {
  os << "id,label";
  for (std::size_t f = 0; f < data.input_dim(); ++f) os << ",x" << f;
  os << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.ids[i] << ',' << data.labels[i];
    for (double v : data.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path);
  write_csv_dataset(os, data);
}

Dataset synth_clusters(std::size_t n, std::size_t dim, std::size_t num_classes, double separation,
                       RngStream rng) {
  if (num_classes < 2) throw ConfigError("synth_clusters needs at least two classes");
  if (n < num_classes) throw ConfigError("synth_clusters needs n >= num_classes");
  if (dim == 0) throw ConfigError("synth_clusters needs dim >= 1");
  // Centres at (separation / sqrt 2) e_c are pairwise `separation` apart; with
  // fewer dims than classes they fall back to points on a line.
  Matrix centres = Matrix::Zero(static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(dim));
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (num_classes <= dim) {
      centres(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) = separation / std::sqrt(2.0);
    } else {
      centres(static_cast<Eigen::Index>(c), 0) = separation * static_cast<double>(c);
    }
  }
  Dataset d;
  d.num_classes = num_classes;
  d.ids.resize(n);
  d.labels.resize(n);
  d.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<int>(i % num_classes);
    d.ids[i] = i;
    d.labels[i] = c;
    for (std::size_t f = 0; f < dim; ++f) {
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) =
          centres(c, static_cast<Eigen::Index>(f)) + rng.normal();
    }
  }
  return d;
}

}  // namespace attrib
