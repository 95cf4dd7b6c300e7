#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>

#include "rttd/data.hpp"

namespace rttd::datasets {

/// Class-conditional Gaussians around seeded N(0,1) centers.
LabeledDataset make_blobs(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                          std::size_t points_per_class, double spread);

struct TinyImageOptions {
  std::size_t grid = 4;            // segments per side; S = grid * grid
  std::size_t bumps_per_class = 2;
  double noise_std = 0.5;          // per-pixel Gaussian noise
  int max_shift = 1;               // per-sample random translation of the bumps, in pixels
  double amplitude_jitter = 0.3;   // amplitude ~ U(1 - j, 1 + j)
};

/// side x side grayscale images: class-specific Gaussian bumps plus noise,
/// flattened row-major and mean-centred per pixel (so the zero image is the
/// dataset mean). The segment map is a grid x grid block partition.
std::pair<LabeledDataset, SegmentMap> make_tiny_images(std::uint64_t seed, std::size_t num_classes,
                                                       std::size_t side, std::size_t points_per_class,
                                                       const TinyImageOptions& opts = {});

/// Block partition of a side x side grid into grid x grid segments.
SegmentMap grid_segments(std::size_t side, std::size_t grid);
/// Contiguous index ranges of near-equal size.
SegmentMap contiguous_segments(std::size_t dim, std::size_t num_segments);

/// Seeded shuffle split; train gets round(fraction * N) rows.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double fraction, std::uint64_t seed);

// Structured-text (JSON) dump: {"dim","num_classes","labels","features","segment_map"?}
std::string dump_dataset(const LabeledDataset& data, const std::optional<SegmentMap>& segments = std::nullopt);
std::pair<LabeledDataset, std::optional<SegmentMap>> load_dataset(const std::string& text);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& data,
                  const std::optional<SegmentMap>& segments = std::nullopt);
std::pair<LabeledDataset, std::optional<SegmentMap>> load_dataset_file(const std::filesystem::path& path);

}  // namespace rttd::datasets
