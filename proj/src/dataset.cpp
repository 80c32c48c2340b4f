#include "attrib/dataset.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "attrib/errors.hpp"

namespace attrib {

void Dataset::validate() const {
  if (ids.empty()) throw ConfigError("dataset is empty");
  if (labels.size() != ids.size() || static_cast<std::size_t>(features.rows()) != ids.size()) {
    throw ConfigError("dataset: ids/labels/features row counts differ");
  }
  if (num_classes < 2) throw ConfigError("dataset: num_classes must be >= 2");
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) {
      throw ConfigError("dataset: duplicate id " + std::to_string(ids[i]));
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ConfigError("dataset: label " + std::to_string(labels[i]) + " of id " +
                        std::to_string(ids[i]) + " out of range");
    }
  }
  if (!features.allFinite()) throw ConfigError("dataset: non-finite feature values");
}

std::size_t Dataset::row_of(std::uint64_t id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ConfigError("unknown example id " + std::to_string(id));
  return static_cast<std::size_t>(it - ids.begin());
}

std::vector<std::size_t> Dataset::rows_of(std::span<const std::uint64_t> wanted) const {
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::vector<std::size_t> rows;
  rows.reserve(wanted.size());
  for (std::uint64_t id : wanted) {
    const auto it = index.find(id);
    if (it == index.end()) throw ConfigError("unknown example id " + std::to_string(id));
    rows.push_back(it->second);
  }
  return rows;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  out.num_classes = num_classes;
  out.ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.ids.push_back(ids.at(rows[i]));
    out.labels.push_back(labels[rows[i]]);
    out.features.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Dataset Dataset::restrict_to(std::span<const std::uint64_t> subset_ids) const {
  std::vector<std::size_t> rows = rows_of(subset_ids);
  std::sort(rows.begin(), rows.end());
  if (std::adjacent_find(rows.begin(), rows.end()) != rows.end()) {
    throw ConfigError("subset contains a duplicate id");
  }
  return select_rows(rows);
}

Dataset Dataset::without(std::span<const std::uint64_t> removed_ids) const {
  const std::vector<std::size_t> removed = rows_of(removed_ids);
  std::vector<bool> drop(ids.size(), false);
  for (std::size_t r : removed) drop[r] = true;
  std::vector<std::size_t> keep;
  keep.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!drop[i]) keep.push_back(i);
  }
  return select_rows(keep);
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t count) {
  if (begin + count > data.size()) throw ConfigError("slice past the end of the dataset");
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = begin + i;
  return data.select_rows(rows);
}

}  // namespace attrib
