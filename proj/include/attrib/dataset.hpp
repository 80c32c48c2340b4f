#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "attrib/numkernel.hpp"

namespace attrib {

/// Ordered labeled examples with stable integer ids.
struct Dataset {
  std::vector<std::uint64_t> ids;
  Matrix features;  // n x input_dim
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return ids.size(); }
  std::size_t input_dim() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws ConfigError on duplicate ids, out-of-range labels, ragged shapes,
  /// non-finite features or an empty set.
  void validate() const;

  /// Row position of `id`; throws ConfigError for unknown ids.
  std::size_t row_of(std::uint64_t id) const;
  /// Positions of `ids`, in the order given.
  std::vector<std::size_t> rows_of(std::span<const std::uint64_t> ids) const;

  /// Rows at the given positions, in the order given.
  Dataset select_rows(std::span<const std::size_t> rows) const;
  /// Restriction to `subset_ids`, keeping this dataset's order.
  Dataset restrict_to(std::span<const std::uint64_t> subset_ids) const;
  /// Everything except `removed_ids`, keeping this dataset's order.
  Dataset without(std::span<const std::uint64_t> removed_ids) const;

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * features.cols(), static_cast<std::size_t>(features.cols())};
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.ids == b.ids && a.labels == b.labels && a.num_classes == b.num_classes &&
           a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.features == b.features;
  }
};

/// Rows [begin, begin + count) as a new dataset.
Dataset slice(const Dataset& data, std::size_t begin, std::size_t count);

}  // namespace attrib
