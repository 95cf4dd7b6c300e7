#pragma once

#include <stdexcept>
#include <string>

namespace rttd {

/// Input shapes that do not fit together (vector lengths, arch mismatch).
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A precondition on argument values failed (empty sample, bad ratio, ...).
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// The computation is mathematically undefined for the given inputs
/// (zero vector under cosine, singular normal equations, constant activations).
struct DegenerateError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Invalid scenario/config/file content. `where` names the field or line.
struct ConfigError : std::runtime_error {
  ConfigError(std::string where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)), detail_(what) {}
  const std::string& where() const noexcept { return where_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string where_;
  std::string detail_;
};

}  // namespace rttd
