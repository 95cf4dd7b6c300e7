#include "rttd/datasets.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "rttd/checkpoint.hpp"
#include "rttd/error.hpp"
#include "rttd/rng.hpp"

namespace rttd {

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.features.reserve(indices.size() * dim);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.push_back(row(i), labels.at(i));
  return out;
}

void LabeledDataset::validate() const {
  if (empty()) throw PreconditionError("dataset: empty");
  if (dim == 0) throw PreconditionError("dataset: zero feature dimension");
  if (features.size() != labels.size() * dim) throw DimensionError("dataset: feature matrix size mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw PreconditionError("dataset: label out of range");
}

void SegmentMap::validate() const {
  if (segment_of.size() != dim) throw DimensionError("segment map: not total over the feature dimension");
  if (num_segments == 0) throw PreconditionError("segment map: no segments");
  std::vector<std::size_t> counts(num_segments, 0);
  for (int s : segment_of) {
    if (s < 0 || static_cast<std::size_t>(s) >= num_segments)
      throw PreconditionError("segment map: segment id out of range");
    ++counts[static_cast<std::size_t>(s)];
  }
  for (auto c : counts)
    if (c == 0) throw PreconditionError("segment map: empty segment");
}

namespace datasets {

namespace {
void require_positive(std::size_t v, const char* name) {
  if (v == 0) throw PreconditionError(std::string(name) + " must be positive");
}
}  // namespace

LabeledDataset make_blobs(std::uint64_t seed, std::size_t num_classes, std::size_t dim,
                          std::size_t points_per_class, double spread) {
  require_positive(num_classes, "num_classes");
  require_positive(dim, "dim");
  require_positive(points_per_class, "points_per_class");
  if (!(spread >= 0.0)) throw PreconditionError("spread must be nonnegative");
  Rng rng(splitmix64(seed ^ 0xB10B5ULL));
  std::vector<double> centers(num_classes * dim);
  for (auto& c : centers) c = rng.normal();
  LabeledDataset d;
  d.dim = dim;
  d.num_classes = num_classes;
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < points_per_class; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      for (std::size_t j = 0; j < dim; ++j) x[j] = centers[c * dim + j] + spread * rng.normal();
      d.push_back(x, static_cast<int>(c));
    }
  }
  return d;
}

SegmentMap grid_segments(std::size_t side, std::size_t grid) {
  require_positive(side, "side");
  if (grid == 0 || grid > side) throw PreconditionError("grid must be in [1, side]");
  SegmentMap m;
  m.dim = side * side;
  m.num_segments = grid * grid;
  m.segment_of.resize(m.dim);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c)
      m.segment_of[r * side + c] = static_cast<int>((r * grid / side) * grid + c * grid / side);
  return m;
}

SegmentMap contiguous_segments(std::size_t dim, std::size_t num_segments) {
  if (num_segments == 0 || num_segments > dim) throw PreconditionError("num_segments must be in [1, dim]");
  SegmentMap m;
  m.dim = dim;
  m.num_segments = num_segments;
  m.segment_of.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) m.segment_of[i] = static_cast<int>(i * num_segments / dim);
  return m;
}

std::pair<LabeledDataset, SegmentMap> make_tiny_images(std::uint64_t seed, std::size_t num_classes,
                                                       std::size_t side, std::size_t points_per_class,
                                                       const TinyImageOptions& opts) {
  if (side < 4) throw PreconditionError("tiny images: side must be >= 4");
  require_positive(num_classes, "num_classes");
  require_positive(points_per_class, "points_per_class");
  require_positive(opts.bumps_per_class, "bumps_per_class");
  auto segments = grid_segments(side, opts.grid);

  Rng rng(splitmix64(seed ^ 0x7111EULL));
  struct Bump {
    double row, col, sign;
  };
  std::vector<std::vector<Bump>> protos(num_classes);
  for (auto& p : protos)
    for (std::size_t b = 0; b < opts.bumps_per_class; ++b)
      p.push_back({rng.uniform(0.0, static_cast<double>(side - 1)), rng.uniform(0.0, static_cast<double>(side - 1)),
                   b == 0 ? 1.0 : (rng.bernoulli(0.5) ? 1.0 : -1.0)});

  const double sigma = static_cast<double>(side) / 6.0;
  const std::size_t dim = side * side;
  LabeledDataset d;
  d.dim = dim;
  d.num_classes = num_classes;
  std::vector<double> img(dim);
  for (std::size_t i = 0; i < points_per_class; ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      const int span = 2 * opts.max_shift + 1;
      const double dr = static_cast<double>(static_cast<int>(rng.below(static_cast<std::uint64_t>(span))) - opts.max_shift);
      const double dc = static_cast<double>(static_cast<int>(rng.below(static_cast<std::uint64_t>(span))) - opts.max_shift);
      const double amp = rng.uniform(1.0 - opts.amplitude_jitter, 1.0 + opts.amplitude_jitter);
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t col = 0; col < side; ++col) {
          double v = 0.0;
          for (const auto& b : protos[c]) {
            const double er = static_cast<double>(r) - (b.row + dr);
            const double ec = static_cast<double>(col) - (b.col + dc);
            v += b.sign * std::exp(-(er * er + ec * ec) / (2.0 * sigma * sigma));
          }
          img[r * side + col] = amp * v + opts.noise_std * rng.normal();
        }
      }
      d.push_back(img, static_cast<int>(c));
    }
  }
  std::vector<double> mean(dim, 0.0);
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t j = 0; j < dim; ++j) mean[j] += d.features[n * dim + j];
  for (auto& m : mean) m /= static_cast<double>(d.size());
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t j = 0; j < dim; ++j) d.features[n * dim + j] -= mean[j];
  return {std::move(d), std::move(segments)};
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw PreconditionError("split: fraction must be in (0, 1)");
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (n_train == 0 || n_train >= data.size()) throw PreconditionError("split: one side would be empty");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(splitmix64(seed ^ 0x5B117ULL));
  rng.shuffle(std::span<std::size_t>(idx));
  std::span<const std::size_t> all(idx);
  return {data.subset(all.first(n_train)), data.subset(all.subspan(n_train))};
}

std::string dump_dataset(const LabeledDataset& data, const std::optional<SegmentMap>& segments) {
  nlohmann::json j;
  j["dim"] = data.dim;
  j["num_classes"] = data.num_classes;
  j["labels"] = data.labels;
  auto rows = nlohmann::json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto r = data.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["features"] = std::move(rows);
  if (segments) {
    j["segment_map"] = {{"dim", segments->dim},
                        {"num_segments", segments->num_segments},
                        {"segment_of", segments->segment_of}};
  }
  return j.dump(1) + "\n";
}

std::pair<LabeledDataset, std::optional<SegmentMap>> load_dataset(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("dataset", e.what());
  }
  try {
    LabeledDataset d;
    d.dim = j.at("dim").get<std::size_t>();
    d.num_classes = j.at("num_classes").get<std::size_t>();
    d.labels = j.at("labels").get<std::vector<int>>();
    const auto& rows = j.at("features");
    if (rows.size() != d.labels.size()) throw ConfigError("dataset.features", "row count does not match labels");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto r = rows[i].get<std::vector<double>>();
      if (r.size() != d.dim) throw ConfigError("dataset.features[" + std::to_string(i) + "]", "wrong length");
      d.features.insert(d.features.end(), r.begin(), r.end());
    }
    d.validate();
    std::optional<SegmentMap> seg;
    if (j.contains("segment_map")) {
      const auto& s = j["segment_map"];
      seg = SegmentMap{s.at("dim").get<std::size_t>(), s.at("num_segments").get<std::size_t>(),
                       s.at("segment_of").get<std::vector<int>>()};
      seg->validate();
      if (seg->dim != d.dim) throw ConfigError("dataset.segment_map", "dim does not match features");
    }
    return {std::move(d), std::move(seg)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("dataset", e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("dataset", e.what());
  }
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& data,
                  const std::optional<SegmentMap>& segments) {
  write_file(path, dump_dataset(data, segments));
}

std::pair<LabeledDataset, std::optional<SegmentMap>> load_dataset_file(const std::filesystem::path& path) {
  return load_dataset(read_file(path));
}

}  // namespace datasets
}  // namespace rttd
