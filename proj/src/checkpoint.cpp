#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "stefnet/config.hpp"
#include "stefnet/model.hpp"

namespace stefnet {
namespace {

constexpr char kMagic[8] = {'S', 'T', 'E', 'F', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxConfigBytes = 1 << 20;
constexpr std::uint32_t kMaxNameBytes = 4096;
constexpr std::uint32_t kMaxRank = 8;

// FNV-1a over every byte preceding the checksum.
class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void integer(T v) {
    for (std::size_t k = 0; k < sizeof(T); ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void real(double v) { integer(std::bit_cast<std::uint64_t>(v)); }
  void string(const std::string& s) { bytes(s.data(), s.size()); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t k = 0; k < n; ++k) {
    h ^= data[k];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void need(std::uint64_t n, const char* what) {
    if (n > in_.size() - pos_) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  template <typename T>
  T integer(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(static_cast<T>(in_[pos_ + k]) << (8 * k));
    pos_ += sizeof(T);
    return v;
  }
  double real(const char* what) { return std::bit_cast<double>(integer<std::uint64_t>(what)); }
  std::string string(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> StefNet::save_bytes() const {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.integer<std::uint32_t>(kVersion);
  const std::string config = to_json(config_).dump();
  w.integer<std::uint64_t>(config.size());
  w.string(config);
  w.integer<std::uint64_t>(params_.size());
  for (const auto& p : params_) {
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.string(p.name);
    w.integer<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.integer<std::uint64_t>(d);
    for (double v : p.tensor.data()) w.real(v);
  }
  auto& buf = w.buffer();
  const std::uint64_t sum = fnv1a(buf.data(), buf.size());
  w.integer<std::uint64_t>(sum);
  return std::move(buf);
}

void StefNet::save(std::ostream& out) const {
  const auto bytes = save_bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed to write checkpoint");
}

StefNet StefNet::load_bytes(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.string(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
    throw FormatError("not a STEF-Net checkpoint (bad magic)");
  }
  const auto version = r.integer<std::uint32_t>("version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  if (bytes.size() < sizeof kMagic + 4 + 8) throw FormatError("checkpoint truncated");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (std::size_t k = 0; k < 8; ++k) stored |= static_cast<std::uint64_t>(bytes[body + k]) << (8 * k);
  if (stored != fnv1a(bytes.data(), body)) throw FormatError("checkpoint checksum mismatch (file corrupt or truncated)");

  const auto config_len = r.integer<std::uint64_t>("config length");
  if (config_len > kMaxConfigBytes) throw FormatError("checkpoint config block too large");
  ModelConfig config;
  try {
    config = model_config_from_json(json::parse(r.string(config_len, "config")));
    config.validate();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint config rejected: ") + e.what());
  }

  StefNet net(config);
  const auto count = r.integer<std::uint64_t>("parameter count");
  if (count != net.params_.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameter tensors, model expects " +
                      std::to_string(net.params_.size()));
  }
  // Decode everything before touching the model so a failure leaves nothing half-loaded.
  std::vector<std::vector<double>> values(count);
  for (std::size_t p = 0; p < count; ++p) {
    const auto& expected = net.params_[p];
    const auto name_len = r.integer<std::uint32_t>("parameter name length");
    if (name_len > kMaxNameBytes) throw FormatError("checkpoint parameter name too long");
    const auto name = r.string(name_len, "parameter name");
    if (name != expected.name) {
      throw FormatError("checkpoint parameter " + std::to_string(p) + " is '" + name + "', expected '" +
                        expected.name + "'");
    }
    const auto rank = r.integer<std::uint32_t>("parameter rank");
    if (rank > kMaxRank) throw FormatError("checkpoint parameter '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.integer<std::uint64_t>("parameter shape");
    if (shape != expected.tensor.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(expected.tensor.shape()));
    }
    r.need(expected.tensor.numel() * 8, "parameter data");
    values[p].resize(expected.tensor.numel());
    for (auto& v : values[p]) v = r.real("parameter data");
  }
  if (r.remaining() != 8) throw FormatError("checkpoint has trailing bytes");
  for (std::size_t p = 0; p < count; ++p) {
    auto dst = net.params_[p].tensor.mutable_data();
    std::copy(values[p].begin(), values[p].end(), dst.begin());
  }
  return net;
}

StefNet StefNet::load(std::istream& in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return load_bytes(bytes);
}

void StefNet::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  save(out);
}

StefNet StefNet::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  return load(in);
}

}  // namespace stefnet
