#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rttd/nn.hpp"

namespace rttd {

/// Model snapshot at a sub-run boundary.
struct Checkpoint {
  nn::ModelWeights weights;
  std::uint64_t step = 0;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Text form (one token group per line):
//
//   rttd-checkpoint 1
//   input_dim 64
//   hidden 32
//   num_classes 4
//   activation relu
//   step 500
//   meta <key> <escaped value>      (zero or more; '\\', '\n', '\t' escaped)
//   values <count>
//   <one value per line, %.17g>
//   end
//
// Binary form: "RTTDCKB1", then little-endian u32 input_dim, u32 #hidden,
// u32 widths..., u32 num_classes, u8 activation, u64 step, u32 #meta,
// (u32 len + bytes) key/value pairs, u64 #values, f64 values.
std::string encode_text(const Checkpoint& c);
Checkpoint decode_text(const std::string& text);
std::vector<std::uint8_t> encode_binary(const Checkpoint& c);
Checkpoint decode_binary(const std::vector<std::uint8_t>& bytes);

/// Writes binary when the extension is ".ckb", text otherwise.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
/// Detects the format from the file's leading magic.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string format_double(double v);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace rttd
