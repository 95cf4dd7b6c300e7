#include "rttd/distances.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "rttd/error.hpp"
#include "rttd/rng.hpp"

namespace rttd::dist {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::parameter: return "parameter";
    case Metric::output: return "output";
    case Metric::zest: return "zest";
    case Metric::cka: return "cka";
  }
  return "?";
}

Metric metric_from_string(std::string_view s) {
  if (s == "parameter") return Metric::parameter;
  if (s == "output") return Metric::output;
  if (s == "zest") return Metric::zest;
  if (s == "cka") return Metric::cka;
  throw PreconditionError("unknown metric '" + std::string(s) + "' (expected parameter|output|zest|cka)");
}

std::uint64_t ProbeContext::fingerprint() const {
  std::uint64_t h = splitmix64(seed);
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  mix(masks_per_point);
  mix(std::bit_cast<std::uint64_t>(baseline));
  mix(segment_map.num_segments);
  for (int s : segment_map.segment_of) mix(static_cast<std::uint64_t>(s));
  for (const auto& pts : {&probe_points, &reference_points}) {
    mix(pts->size());
    for (const auto& p : *pts)
      for (double v : p) mix(std::bit_cast<std::uint64_t>(v));
  }
  for (auto m : masks) mix(m);
  return h;
}

ProbeContext make_probe_context(const LabeledDataset& pool, const SegmentMap& segments, const ProbeOptions& opts,
                                std::uint64_t seed) {
  pool.validate();
  segments.validate();
  if (segments.dim != pool.dim) throw DimensionError("probe context: segment map does not match feature dim");
  if (opts.num_probe_points == 0 || opts.num_reference_points == 0 || opts.masks_per_point == 0)
    throw PreconditionError("probe context: counts must be positive");
  ProbeContext ctx;
  ctx.seed = seed;
  ctx.segment_map = segments;
  ctx.masks_per_point = opts.masks_per_point;
  ctx.baseline = opts.baseline;
  ctx.ridge_lambda = opts.ridge_lambda;

  Rng rng(splitmix64(seed ^ 0x9120BEULL));
  auto draw = [&](std::size_t count) {
    // Without replacement while the pool lasts, then with replacement.
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t k = i < idx.size() ? idx[i] : static_cast<std::size_t>(rng.below(pool.size()));
      auto r = pool.row(k);
      pts.emplace_back(r.begin(), r.end());
    }
    return pts;
  };
  ctx.probe_points = draw(opts.num_probe_points);
  ctx.reference_points = draw(opts.num_reference_points);
  ctx.masks.resize(opts.num_reference_points * opts.masks_per_point * segments.num_segments);
  for (auto& m : ctx.masks) m = rng.bernoulli(0.5) ? 1 : 0;
  return ctx;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine distance: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DegenerateError("cosine distance undefined for a zero vector");
  return std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0);
}

double param_cosine_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2) {
  if (!(w1.arch() == w2.arch())) throw DimensionError("parameter distance: architectures differ");
  return cosine_distance(w1.values(), w2.values());
}

namespace {

std::vector<double> concat_logits(const nn::ModelWeights& w, const ProbeContext& ctx) {
  if (ctx.probe_points.empty()) throw PreconditionError("probe context has no probe points");
  std::vector<double> out;
  out.reserve(ctx.probe_points.size() * w.arch().num_classes);
  for (const auto& x : ctx.probe_points) {
    auto z = nn::forward(w, x);
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

// Column-centred last-hidden activations, rows = probe points.
std::vector<double> centred_activations(const nn::ModelWeights& w, const ProbeContext& ctx, std::size_t& cols) {
  if (ctx.probe_points.empty()) throw PreconditionError("probe context has no probe points");
  if (w.arch().hidden_dims.empty()) throw PreconditionError("cka distance needs a model with a hidden layer");
  cols = w.arch().hidden_dims.back();
  const std::size_t rows = ctx.probe_points.size();
  std::vector<double> a;
  a.reserve(rows * cols);
  for (const auto& x : ctx.probe_points) {
    auto h = nn::forward_hidden(w, x);
    a.insert(a.end(), h.begin(), h.end());
  }
  for (std::size_t c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += a[r * cols + c];
    mean /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) a[r * cols + c] -= mean;
  }
  return a;
}

// ||B^T A||_F^2 for centred row-major matrices with a shared row count.
double cross_hsic(std::span<const double> a, std::size_t a_cols, std::span<const double> b, std::size_t b_cols,
                  std::size_t rows) {
  double total = 0.0;
  for (std::size_t i = 0; i < b_cols; ++i) {
    for (std::size_t j = 0; j < a_cols; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += b[r * b_cols + i] * a[r * a_cols + j];
      total += s * s;
    }
  }
  return total;
}

double cka_centred(std::span<const double> x, std::size_t x_cols, std::span<const double> y, std::size_t y_cols,
                   std::size_t rows) {
  // Fixed argument order keeps the cross term's summation order symmetric.
  const bool swap = y_cols < x_cols ||
                    (y_cols == x_cols && std::lexicographical_compare(y.begin(), y.end(), x.begin(), x.end()));
  if (swap) {
    std::swap(x, y);
    std::swap(x_cols, y_cols);
  }
  const double hxx = cross_hsic(x, x_cols, x, x_cols, rows);
  const double hyy = cross_hsic(y, y_cols, y, y_cols, rows);
  if (hxx == 0.0 || hyy == 0.0) throw DegenerateError("cka: activation matrix has zero variance");
  const double hxy = cross_hsic(x, x_cols, y, y_cols, rows);
  return std::clamp(hxy / std::sqrt(hxx * hyy), 0.0, 1.0);
}

}  // namespace

double output_space_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2, const ProbeContext& ctx) {
  if (!(w1.arch() == w2.arch())) throw DimensionError("output distance: architectures differ");
  return cosine_distance(concat_logits(w1, ctx), concat_logits(w2, ctx));
}

std::vector<double> masked_sample(std::span<const double> x, std::span<const std::uint8_t> mask,
                                  const SegmentMap& segments, double baseline) {
  if (mask.size() != segments.num_segments) throw DimensionError("masked sample: mask length != segment count");
  if (x.size() != segments.dim) throw DimensionError("masked sample: input length != segment map dim");
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[static_cast<std::size_t>(segments.segment_of[i])] == 0) out[i] = baseline;
  return out;
}

std::vector<double> fit_mask_surrogate(std::span<const std::uint8_t> masks, std::size_t num_samples,
                                       std::size_t num_segments, std::span<const double> targets,
                                       std::size_t num_outputs, double ridge_lambda) {
  if (masks.size() != num_samples * num_segments) throw DimensionError("surrogate fit: mask matrix size");
  if (targets.size() != num_samples * num_outputs) throw DimensionError("surrogate fit: target matrix size");
  if (!(ridge_lambda >= 0.0)) throw PreconditionError("surrogate fit: ridge lambda must be >= 0");
  const auto p = static_cast<Eigen::Index>(num_segments + 1);
  const auto c = static_cast<Eigen::Index>(num_outputs);
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd aty = Eigen::MatrixXd::Zero(p, c);
  Eigen::VectorXd row(p);
  for (std::size_t n = 0; n < num_samples; ++n) {
    row(0) = 1.0;
    for (std::size_t s = 0; s < num_segments; ++s) row(static_cast<Eigen::Index>(s + 1)) = masks[n * num_segments + s];
    ata.noalias() += row * row.transpose();
    for (Eigen::Index k = 0; k < c; ++k) aty.col(k) += row * targets[n * num_outputs + static_cast<std::size_t>(k)];
  }
  for (Eigen::Index i = 1; i < p; ++i) ata(i, i) += ridge_lambda;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ata);
  if (qr.rank() < p) throw DegenerateError("surrogate fit: singular normal equations");
  const Eigen::MatrixXd beta = qr.solve(aty);
  std::vector<double> out(num_segments * num_outputs);
  for (std::size_t s = 0; s < num_segments; ++s)
    for (std::size_t k = 0; k < num_outputs; ++k)
      out[s * num_outputs + k] = beta(static_cast<Eigen::Index>(s + 1), static_cast<Eigen::Index>(k));
  return out;
}

ZestSignature zest_signature(const nn::ModelWeights& w, const ProbeContext& ctx, double ridge_lambda) {
  const std::size_t r_count = ctx.reference_points.size();
  const std::size_t s_count = ctx.num_segments();
  const std::size_t n_masks = ctx.masks_per_point;
  const std::size_t classes = w.arch().num_classes;
  if (r_count == 0) throw PreconditionError("zest: no reference points");
  if (n_masks < s_count + 1) throw PreconditionError("zest: need at least S + 1 masks per reference point");
  if (ctx.masks.size() != r_count * n_masks * s_count) throw DimensionError("zest: mask table size");

  ZestSignature sig;
  sig.num_reference = r_count;
  sig.num_segments = s_count;
  sig.num_classes = classes;
  sig.context_fingerprint = ctx.fingerprint();
  sig.values.reserve(r_count * s_count * classes);
  std::vector<double> targets(n_masks * classes);
  for (std::size_t r = 0; r < r_count; ++r) {
    for (std::size_t n = 0; n < n_masks; ++n) {
      const auto z = nn::forward(w, masked_sample(ctx.reference_points[r], ctx.mask(r, n), ctx.segment_map, ctx.baseline));
      std::copy(z.begin(), z.end(), targets.begin() + static_cast<std::ptrdiff_t>(n * classes));
    }
    const std::span<const std::uint8_t> block(ctx.masks.data() + r * n_masks * s_count, n_masks * s_count);
    const auto coef = fit_mask_surrogate(block, n_masks, s_count, targets, classes, ridge_lambda);
    sig.values.insert(sig.values.end(), coef.begin(), coef.end());
  }
  return sig;
}

double zest_distance(const ZestSignature& s1, const ZestSignature& s2) {
  if (s1.values.size() != s2.values.size() || s1.context_fingerprint != s2.context_fingerprint)
    throw PreconditionError("zest distance: signatures were computed under different probe contexts");
  return cosine_distance(s1.values, s2.values);
}

double cka_linear(std::span<const double> x, std::span<const double> y, std::size_t rows, std::size_t x_cols,
                  std::size_t y_cols) {
  if (rows == 0 || x.size() != rows * x_cols || y.size() != rows * y_cols)
    throw DimensionError("cka: matrix shape mismatch");
  auto centre = [rows](std::span<const double> m, std::size_t cols) {
    std::vector<double> a(m.begin(), m.end());
    for (std::size_t c = 0; c < cols; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < rows; ++r) mean += a[r * cols + c];
      mean /= static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r) a[r * cols + c] -= mean;
    }
    return a;
  };
  const auto xc = centre(x, x_cols);
  const auto yc = centre(y, y_cols);
  return cka_centred(xc, x_cols, yc, y_cols, rows);
}

double cka_linear_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2, const ProbeContext& ctx) {
  return representation_distance(represent(w1, Metric::cka, ctx), represent(w2, Metric::cka, ctx));
}

Representation represent(const nn::ModelWeights& w, Metric metric, const ProbeContext& ctx) {
  Representation rep;
  rep.metric = metric;
  switch (metric) {
    case Metric::parameter:
      rep.values.assign(w.values().begin(), w.values().end());
      break;
    case Metric::output:
      rep.values = concat_logits(w, ctx);
      rep.context_fingerprint = ctx.fingerprint();
      break;
    case Metric::zest: {
      auto sig = zest_signature(w, ctx, ctx.ridge_lambda);
      rep.values = std::move(sig.values);
      rep.context_fingerprint = sig.context_fingerprint;
      break;
    }
    case Metric::cka:
      rep.values = centred_activations(w, ctx, rep.cols);
      rep.rows = ctx.probe_points.size();
      rep.context_fingerprint = ctx.fingerprint();
      break;
  }
  return rep;
}

double representation_distance(const Representation& a, const Representation& b) {
  if (a.metric != b.metric) throw PreconditionError("representations use different metrics");
  if (a.context_fingerprint != b.context_fingerprint)
    throw PreconditionError("representations were computed under different probe contexts");
  if (a.metric == Metric::cka) {
    if (a.rows != b.rows) throw DimensionError("cka: probe counts differ");
    return 1.0 - cka_centred(a.values, a.cols, b.values, b.cols, a.rows);
  }
  return cosine_distance(a.values, b.values);
}

double model_distance(const nn::ModelWeights& w1, const nn::ModelWeights& w2, Metric metric, const ProbeContext& ctx) {
  switch (metric) {
    case Metric::parameter: return param_cosine_distance(w1, w2);
    case Metric::output: return output_space_distance(w1, w2, ctx);
    case Metric::zest:
      if (!(w1.arch() == w2.arch())) throw DimensionError("zest distance: architectures differ");
      return zest_distance(zest_signature(w1, ctx, ctx.ridge_lambda), zest_signature(w2, ctx, ctx.ridge_lambda));
    case Metric::cka:
      if (!(w1.arch() == w2.arch())) throw DimensionError("cka distance: architectures differ");
      return cka_linear_distance(w1, w2, ctx);
  }
  return 0.0;
}

}  // namespace rttd::dist
