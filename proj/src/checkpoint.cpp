#include "rttd/checkpoint.hpp"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rttd/error.hpp"

namespace rttd {

namespace {

constexpr char kTextMagic[] = "rttd-checkpoint";
constexpr char kBinaryMagic[] = "RTTDCKB1";

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string unescape(const std::string& s, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw ConfigError("line " + std::to_string(line), "dangling escape");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      default: throw ConfigError("line " + std::to_string(line), "unknown escape");
    }
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  // ERANGE on underflow still yields the right subnormal; only overflow is an error
  if (s.empty() || end != s.c_str() + s.size() || (errno == ERANGE && std::isinf(v)))
    throw ConfigError("line " + std::to_string(line), "bad number '" + s + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("line " + std::to_string(line), "bad integer '" + s + "'");
  return std::stoull(s);
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) : in_(text) {}
  // Next line split into keyword and remainder.
  std::pair<std::string, std::string> next() {
    std::string l;
    if (!std::getline(in_, l)) throw ConfigError("line " + std::to_string(line_ + 1), "unexpected end of checkpoint");
    ++line_;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    const auto sp = l.find(' ');
    if (sp == std::string::npos) return {l, ""};
    return {l.substr(0, sp), l.substr(sp + 1)};
  }
  std::pair<std::string, std::string> expect(const std::string& keyword) {
    auto kv = next();
    if (kv.first != keyword) throw ConfigError(where(), "expected '" + keyword + "', found '" + kv.first + "'");
    return kv;
  }
  std::size_t line() const { return line_; }
  std::string where() const { return "line " + std::to_string(line_); }

 private:
  std::istringstream in_;
  std::size_t line_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint64_t uint(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > b_.size()) throw ConfigError("binary checkpoint", "truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    if (pos_ + n > b_.size()) throw ConfigError("binary checkpoint", "truncated");
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string encode_text(const Checkpoint& c) {
  const auto& arch = c.weights.arch();
  std::ostringstream os;
  os << kTextMagic << " 1\n";
  os << "input_dim " << arch.input_dim << '\n';
  os << "hidden";
  for (auto h : arch.hidden_dims) os << ' ' << h;
  os << '\n';
  os << "num_classes " << arch.num_classes << '\n';
  os << "activation " << nn::to_string(arch.activation) << '\n';
  os << "step " << c.step << '\n';
  for (const auto& [k, v] : c.metadata) {
    if (k.empty() || k.find_first_of(" \t\n\r\\") != std::string::npos)
      throw PreconditionError("checkpoint metadata key '" + k + "' must be a non-empty token");
    os << "meta " << k << ' ' << escape(v) << '\n';
  }
  os << "values " << c.weights.size() << '\n';
  for (double v : c.weights.values()) os << format_double(v) << '\n';
  os << "end\n";
  return os.str();
}

Checkpoint decode_text(const std::string& text) {
  LineReader in(text);
  auto [magic, version] = in.next();
  if (magic != kTextMagic) throw ConfigError(in.where(), "not a text checkpoint");
  if (version != "1") throw ConfigError(in.where(), "unsupported checkpoint version '" + version + "'");
  nn::ModelArch arch;
  arch.input_dim = parse_uint(in.expect("input_dim").second, in.line());
  {
    std::istringstream hs(in.expect("hidden").second);
    std::string tok;
    while (hs >> tok) arch.hidden_dims.push_back(parse_uint(tok, in.line()));
  }
  arch.num_classes = parse_uint(in.expect("num_classes").second, in.line());
  try {
    arch.activation = nn::activation_from_string(in.expect("activation").second);
    arch.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(in.where(), e.what());
  }
  Checkpoint c;
  c.step = parse_uint(in.expect("step").second, in.line());
  auto kv = in.next();
  while (kv.first == "meta") {
    const auto sp = kv.second.find(' ');
    const std::string key = kv.second.substr(0, sp);
    const std::string val = sp == std::string::npos ? "" : kv.second.substr(sp + 1);
    c.metadata[key] = unescape(val, in.line());
    kv = in.next();
  }
  if (kv.first != "values") throw ConfigError(in.where(), "expected 'values'");
  const auto count = parse_uint(kv.second, in.line());
  if (count != arch.param_count())
    throw ConfigError(in.where(), "value count " + std::to_string(count) + " does not match arch (" +
                                      std::to_string(arch.param_count()) + ")");
  std::vector<double> values;
  values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) values.push_back(parse_double(in.next().first, in.line()));
  in.expect("end");
  try {
    c.weights = nn::ModelWeights(arch, std::move(values));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("checkpoint", e.what());
  }
  return c;
}

std::vector<std::uint8_t> encode_binary(const Checkpoint& c) {
  const auto& arch = c.weights.arch();
  std::vector<std::uint8_t> out(kBinaryMagic, kBinaryMagic + 8);
  put_u32(out, static_cast<std::uint32_t>(arch.input_dim));
  put_u32(out, static_cast<std::uint32_t>(arch.hidden_dims.size()));
  for (auto h : arch.hidden_dims) put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(arch.num_classes));
  out.push_back(arch.activation == nn::Activation::relu ? 0 : 1);
  put_u64(out, c.step);
  put_u32(out, static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    put_u32(out, static_cast<std::uint32_t>(k.size()));
    out.insert(out.end(), k.begin(), k.end());
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    out.insert(out.end(), v.begin(), v.end());
  }
  put_u64(out, c.weights.size());
  for (double v : c.weights.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Checkpoint decode_binary(const std::vector<std::uint8_t>& bytes) {
  ByteReader in(bytes);
  if (in.str(8) != kBinaryMagic) throw ConfigError("binary checkpoint", "bad magic");
  nn::ModelArch arch;
  arch.input_dim = in.uint(4);
  const auto nh = in.uint(4);
  for (std::uint64_t i = 0; i < nh; ++i) arch.hidden_dims.push_back(in.uint(4));
  arch.num_classes = in.uint(4);
  const auto act = in.uint(1);
  if (act > 1) throw ConfigError("binary checkpoint", "bad activation code");
  arch.activation = act == 0 ? nn::Activation::relu : nn::Activation::tanh;
  Checkpoint c;
  c.step = in.uint(8);
  const auto nmeta = in.uint(4);
  for (std::uint64_t i = 0; i < nmeta; ++i) {
    auto k = in.str(in.uint(4));
    c.metadata[k] = in.str(in.uint(4));
  }
  const auto count = in.uint(8);
  std::vector<double> values;
  values.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) values.push_back(std::bit_cast<double>(in.uint(8)));
  if (!in.done()) throw ConfigError("binary checkpoint", "trailing bytes");
  try {
    c.weights = nn::ModelWeights(arch, std::move(values));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("binary checkpoint", e.what());
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path.string(), "cannot write file");
  out << content;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  if (path.extension() == ".ckb") {
    const auto bytes = encode_binary(c);
    write_file(path, std::string(bytes.begin(), bytes.end()));
  } else {
    write_file(path, encode_text(c));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto raw = read_file(path);
  if (raw.rfind(kBinaryMagic, 0) == 0) return decode_binary(std::vector<std::uint8_t>(raw.begin(), raw.end()));
  return decode_text(raw);
}

}  // namespace rttd
