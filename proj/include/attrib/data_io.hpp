#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>

#include "attrib/dataset.hpp"
#include "attrib/rng.hpp"

namespace attrib {

/// Big-endian IDX pair: images magic 0x00000803 with dims (n, rows, cols),
/// labels magic 0x00000801. Pixels are scaled by 1/255; ids are 0..n-1.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       std::optional<std::size_t> limit = std::nullopt);

/// Rows "id,label,feature..." with an optional header line starting with "id".
Dataset read_csv_dataset(std::istream& is, std::size_t num_classes, const std::string& source = "csv");
Dataset load_csv(const std::string& path, std::size_t num_classes);
void write_csv_dataset(std::ostream& os, const Dataset& data);
void save_csv(const std::string& path, const Dataset& data);

/// Gaussian blobs (unit variance) whose class centres sit `separation` apart
/// along orthogonal axes; labels are assigned round-robin.
Dataset synth_clusters(std::size_t n, std::size_t dim, std::size_t num_classes, double separation,
                       RngStream rng);

}  // namespace attrib
