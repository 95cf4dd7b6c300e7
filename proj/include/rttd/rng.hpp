#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace rttd {

enum class Stream : std::uint8_t { shuffle = 1, augment = 2, init = 3, attack = 4 };

std::string_view to_string(Stream s);

/// Identifies one independent random stream.
///
/// `server_id` carries the server and replica packed as server*1e6 + replica
/// (see `server_slot`). The stream seed is a splitmix64 chain over
/// (scenario_seed, server_id, subrun_index, stream, salt), so any
/// implementation using the same chain and mt19937_64 reproduces it.
struct RngKey {
  std::uint64_t scenario_seed = 0;
  std::int64_t server_id = 0;
  std::int64_t subrun_index = 0;
  Stream stream = Stream::shuffle;
  std::uint64_t salt = 0;

  RngKey with_stream(Stream s) const {
    RngKey k = *this;
    k.stream = s;
    return k;
  }
  /// Child key for an auxiliary stream of the same owner.
  RngKey derive(std::uint64_t tag) const {
    RngKey k = *this;
    k.salt = k.salt * 0x9E3779B97F4A7C15ULL + tag + 1;
    return k;
  }
  std::uint64_t seed() const;

  friend bool operator==(const RngKey&, const RngKey&) = default;
};

constexpr std::int64_t server_slot(std::int64_t server, std::int64_t replica) {
  return server * 1'000'000 + replica;
}

std::uint64_t splitmix64(std::uint64_t x);

/// Portable generator: mt19937_64 plus hand-rolled conversions, so results
/// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(const RngKey& key) : engine_(key.seed()) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rttd
