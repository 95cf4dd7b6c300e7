#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rttd {

/// Row-major feature matrix with one class label per row.
struct LabeledDataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // size() * dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {features.data() + i * dim, dim}; }

  void push_back(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }
  /// Rows selected by index, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;
  /// Throws PreconditionError/DimensionError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

/// Assigns each feature index to one of `num_segments` segments.
struct SegmentMap {
  std::size_t dim = 0;
  std::size_t num_segments = 0;
  std::vector<int> segment_of;

  void validate() const;
  friend bool operator==(const SegmentMap&, const SegmentMap&) = default;
};

}  // namespace rttd
