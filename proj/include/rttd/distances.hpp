#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "rttd/data.hpp"
#include "rttd/nn.hpp"

namespace rttd::dist {

enum class Metric { parameter, output, zest, cka };

std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view s);

/// Inputs shared by every model comparison of one replicated sub-run.
///
/// `masks` holds, for each reference point r and draw n, a 0/1 vector over
/// the segments, flattened as masks[(r * masks_per_point + n) * S + s].
struct ProbeContext {
  std::vector<std::vector<double>> probe_points;
  std::vector<std::vector<double>> reference_points;
  std::size_t masks_per_point = 0;
  std::vector<std::uint8_t> masks;
  SegmentMap segment_map;
  std::uint64_t seed = 0;
  double baseline = 0.0;       // value written into masked-out segments
  double ridge_lambda = 1e-6;  // used by the generic metric dispatch

  std::size_t num_segments() const { return segment_map.num_segments; }
  std::span<const std::uint8_t> mask(std::size_t r, std::size_t n) const {
    return {masks.data() + (r * masks_per_point + n) * num_segments(), num_segments()};
  }
  /// Hash of every field that affects a Zest signature.
  std::uint64_t fingerprint() const;
};

struct ProbeOptions {
  std::size_t num_probe_points = 128;
  std::size_t num_reference_points = 32;
  std::size_t masks_per_point = 64;
  double ridge_lambda = 1e-6;
  double baseline = 0.0;

  friend bool operator==(const ProbeOptions&, const ProbeOptions&) = default;
};

/// Draws probe and reference points from `pool` and i.i.d. Bernoulli(0.5)
/// segment masks, all from `seed`.
ProbeContext make_probe_context(const LabeledDataset& pool, const SegmentMap& segments, const ProbeOptions& opts,
                                std::uint64_t seed);

/// 1 - a.b / (|a| |b|), clamped to [0, 2]. Throws DegenerateError on a zero vector.
double cosine_distance(std::span<const double> a, std::span<const double> b);

double param_cosine_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2);
double output_space_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2, const ProbeContext& ctx);

/// Copy of `x` with every segment whose mask bit is 0 replaced by `baseline`.
std::vector<double> masked_sample(std::span<const double> x, std::span<const std::uint8_t> mask,
                                  const SegmentMap& segments, double baseline = 0.0);

struct ZestSignature {
  std::vector<double> values;  // R blocks of S x C (row-major, segment-major)
  std::size_t num_reference = 0;
  std::size_t num_segments = 0;
  std::size_t num_classes = 0;
  std::uint64_t context_fingerprint = 0;

  friend bool operator==(const ZestSignature&, const ZestSignature&) = default;
};

/// Ridge regression from [1, mask bits] to `targets` (rows = samples).
/// Returns the S x C coefficient block without the intercept, row-major.
/// The intercept is not penalised. Throws DegenerateError when the normal
/// equations are singular.
std::vector<double> fit_mask_surrogate(std::span<const std::uint8_t> masks, std::size_t num_samples,
                                       std::size_t num_segments, std::span<const double> targets,
                                       std::size_t num_outputs, double ridge_lambda);

ZestSignature zest_signature(const nn::ModelWeights& w, const ProbeContext& ctx, double ridge_lambda);
/// Throws PreconditionError when the signatures come from different contexts.
double zest_distance(const ZestSignature& s1, const ZestSignature& s2);

/// Linear CKA between activation matrices (rows = samples). Columns are
/// centred internally. Throws DegenerateError if either matrix has no variance.
double cka_linear(std::span<const double> x, std::span<const double> y, std::size_t rows, std::size_t x_cols,
                  std::size_t y_cols);
/// 1 - linear CKA of the last-hidden activations on the probe points.
double cka_linear_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2, const ProbeContext& ctx);

/// Per-model feature that a metric compares: flat parameters, concatenated
/// logits, the Zest signature, or the last-hidden activation matrix.
struct Representation {
  Metric metric = Metric::parameter;
  std::vector<double> values;
  std::size_t rows = 0;  // activation rows for cka
  std::size_t cols = 0;
  std::uint64_t context_fingerprint = 0;
};

Representation represent(const nn::ModelWeights& w, Metric metric, const ProbeContext& ctx);
double representation_distance(const Representation& a, const Representation& b);
/// One metric evaluation from scratch (no shared representations).
double model_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2, Metric metric, const ProbeContext& ctx);

}  // namespace rttd::dist
