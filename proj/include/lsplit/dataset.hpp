#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "lsplit/errors.hpp"
#include "lsplit/nn.hpp"

namespace lsplit {

// Labeled examples with fixed-length real features. Rows are stored
// contiguously; ids are stable identifiers carried through every output file.
struct Dataset {
  std::vector<std::int64_t> ids;
  Matrix features;  // n x d
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data.data() + i * features.cols, features.cols};
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> c(num_classes, 0);
    for (std::size_t y : labels) c[y] += 1;
    return c;
  }

  std::size_t classes_present() const {
    std::size_t n = 0;
    for (std::size_t c : class_counts()) n += c > 0 ? 1 : 0;
    return n;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.features = Matrix(indices.size(), dim());
    out.ids.reserve(indices.size());
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const std::size_t i = indices[k];
      out.ids.push_back(ids[i]);
      out.labels.push_back(labels[i]);
      std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(i * dim()), dim(),
                  out.features.data.begin() + static_cast<std::ptrdiff_t>(k * dim()));
    }
    return out;
  }

  void validate() const {
    const std::size_t n = labels.size();
    if (ids.size() != n || features.rows != n || features.data.size() != n * features.cols) {
      throw ShapeError("dataset columns have inconsistent lengths");
    }
    if (n > 0 && features.cols == 0) throw ShapeError("dataset has no feature columns");
    if (num_classes == 0 && n > 0) throw ContractError("dataset has zero classes");
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] >= num_classes) {
        throw ContractError("label " + std::to_string(labels[i]) + " of id " +
                            std::to_string(ids[i]) + " is >= num_classes " +
                            std::to_string(num_classes));
      }
    }
    std::unordered_set<std::int64_t> seen;
    seen.reserve(n);
    for (auto id : ids) {
      if (!seen.insert(id).second) {
        throw ContractError("duplicate example id " + std::to_string(id));
      }
    }
  }

  bool operator==(const Dataset&) const = default;
};

// Audit-only information about how a synthetic dataset was made. The
// splitting algorithm never reads it.
struct GroundTruth {
  std::optional<std::vector<int>> spurious;           // attribute a_i in {0, 1}
  std::optional<std::vector<std::uint8_t>> polluted;  // label was corrupted

  bool is_minority(std::size_t i, std::size_t label) const {
    return spurious && static_cast<std::size_t>((*spurious)[i]) != label;
  }

  GroundTruth subset(std::span<const std::size_t> indices) const {
    GroundTruth out;
    if (spurious) {
      out.spurious.emplace();
      for (auto i : indices) out.spurious->push_back((*spurious)[i]);
    }
    if (polluted) {
      out.polluted.emplace();
      for (auto i : indices) out.polluted->push_back((*polluted)[i]);
    }
    return out;
  }

  bool operator==(const GroundTruth&) const = default;
};

struct LabeledData {
  Dataset dataset;
  GroundTruth truth;
};

}  // namespace lsplit
