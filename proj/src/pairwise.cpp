#include <exception>
#include <string>

#include <omp.h>

#include "rttd/detector.hpp"
#include "rttd/error.hpp"

namespace rttd::detect {

namespace {

void check_models(std::span<const nn::ModelWeights> models) {
  if (models.size() < 3) throw PreconditionError("pairwise distances need at least 3 models");
  for (const auto& m : models)
    if (!(m.arch() == models.front().arch())) throw DimensionError("pairwise distances: architectures differ");
}

// Re-raise with the failing pair named, keeping the error category.
[[noreturn]] void rethrow_for_pair(std::exception_ptr e, std::size_t i, std::size_t j) {
  const std::string where = "pair (" + std::to_string(i) + ", " + std::to_string(j) + "): ";
  try {
    std::rethrow_exception(e);
  } catch (const DegenerateError& x) {
    throw DegenerateError(where + x.what());
  } catch (const DimensionError& x) {
    throw DimensionError(where + x.what());
  } catch (const PreconditionError& x) {
    throw PreconditionError(where + x.what());
  }
}

}  // namespace

DistanceMatrix pairwise_distances(std::span<const nn::ModelWeights> models, dist::Metric metric,
                                  const dist::ProbeContext& ctx) {
  check_models(models);
  const std::size_t n = models.size();
  std::vector<dist::Representation> reps(n);
  std::vector<std::exception_ptr> rep_errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      reps[i] = dist::represent(models[i], metric, ctx);
    } catch (...) {
      rep_errors[i] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (rep_errors[i]) rethrow_for_pair(rep_errors[i], i, i == 0 ? 1 : 0);

  const std::size_t pairs = n * (n - 1) / 2;
  std::vector<double> values(pairs);
  std::vector<std::exception_ptr> pair_errors(pairs);
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < pairs; ++p) {
    // Unrank p into (i, j), i < j, in row order.
    std::size_t i = 0, rem = p;
    while (rem >= n - 1 - i) {
      rem -= n - 1 - i;
      ++i;
    }
    const std::size_t j = i + 1 + rem;
    try {
      values[p] = dist::representation_distance(reps[i], reps[j]);
    } catch (...) {
      pair_errors[p] = std::current_exception();
    }
  }
  DistanceMatrix out(n, metric);
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j, ++p) {
      if (pair_errors[p]) rethrow_for_pair(pair_errors[p], i, j);
      out.set(i, j, values[p]);
    }
  return out;
}

DistanceMatrix pairwise_distances_serial(std::span<const nn::ModelWeights> models, dist::Metric metric,
                                         const dist::ProbeContext& ctx) {
  check_models(models);
  DistanceMatrix out(models.size(), metric);
  for (std::size_t i = 0; i < models.size(); ++i)
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      try {
        out.set(i, j, dist::model_distance(models[i], models[j], metric, ctx));
      } catch (...) {
        rethrow_for_pair(std::current_exception(), i, j);
      }
    }
  return out;
}

}  // namespace rttd::detect
