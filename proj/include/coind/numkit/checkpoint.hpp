#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coind/numkit/adam.hpp"
#include "coind/numkit/dense_net.hpp"
#include "coind/numkit/error.hpp"

namespace coind {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Everything needed to resume or evaluate a trained network.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::size_t> layer_sizes;
  std::vector<double> params;
  bool has_optimizer = false;
  AdamConfig adam;
  std::uint64_t adam_step = 0;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t config_hash = 0;
  /// Free-form string fields (model layout, arm name, provenance).
  std::map<std::string, std::string> metadata;

  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void put_string(std::string_view s) {
    put<std::uint64_t>(s.size());
    bytes_.append(s);
  }
  void put_doubles(std::span<const double> v) {
    put<std::uint64_t>(v.size());
    bytes_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  [[nodiscard]] const std::string& bytes() const noexcept { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw FormatError("checkpoint: truncated or corrupt payload");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  [[nodiscard]] std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint: truncated or corrupt payload");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

constexpr char kCheckpointMagic[8] = {'C', 'O', 'I', 'N', 'D', 'C', 'K', '\0'};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  for (char c : detail::kCheckpointMagic) w.put<char>(c);
  w.put<std::uint32_t>(Checkpoint::kVersion);
  w.put<std::uint64_t>(ck.config_hash);
  w.put<std::uint64_t>(ck.layer_sizes.size());
  for (auto s : ck.layer_sizes) w.put<std::uint64_t>(s);
  w.put_doubles(ck.params);
  w.put<std::uint8_t>(ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    w.put<double>(ck.adam.learning_rate);
    w.put<double>(ck.adam.beta1);
    w.put<double>(ck.adam.beta2);
    w.put<double>(ck.adam.epsilon);
    w.put<double>(ck.adam.weight_decay);
    w.put<std::uint64_t>(ck.adam_step);
    w.put_doubles(ck.adam_m);
    w.put_doubles(ck.adam_v);
  }
  w.put<std::uint64_t>(ck.metadata.size());
  for (const auto& [k, v] : ck.metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  std::string out = w.bytes();
  detail::ByteWriter tail;
  tail.put<std::uint64_t>(fnv1a64(out));
  return out + tail.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  constexpr std::size_t kHeader = sizeof(detail::kCheckpointMagic) + sizeof(std::uint32_t);
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), detail::kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic (not a checkpoint file)");
  }
  detail::ByteReader r(bytes);
  for (std::size_t i = 0; i < 8; ++i) (void)r.get<char>();
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw VersionError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(Checkpoint::kVersion) + ")");
  }
  if (bytes.size() < kHeader + sizeof(std::uint64_t)) throw FormatError("checkpoint: truncated or corrupt payload");
  const std::string_view body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
  if (stored != fnv1a64(body)) throw FormatError("checkpoint: checksum mismatch (truncated or corrupt file)");

  Checkpoint ck;
  detail::ByteReader rb(body);
  for (std::size_t i = 0; i < kHeader; ++i) (void)rb.get<char>();
  ck.config_hash = rb.get<std::uint64_t>();
  const auto n_layers = rb.get<std::uint64_t>();
  if (n_layers > 1024) throw FormatError("checkpoint: implausible layer count");
  for (std::uint64_t i = 0; i < n_layers; ++i) ck.layer_sizes.push_back(rb.get<std::uint64_t>());
  ck.params = rb.get_doubles();
  ck.has_optimizer = rb.get<std::uint8_t>() != 0;
  if (ck.has_optimizer) {
    ck.adam.learning_rate = rb.get<double>();
    ck.adam.beta1 = rb.get<double>();
    ck.adam.beta2 = rb.get<double>();
    ck.adam.epsilon = rb.get<double>();
    ck.adam.weight_decay = rb.get<double>();
    ck.adam_step = rb.get<std::uint64_t>();
    ck.adam_m = rb.get_doubles();
    ck.adam_v = rb.get_doubles();
  }
  const auto n_meta = rb.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = rb.get_string();
    ck.metadata[std::move(k)] = rb.get_string();
  }
  if (rb.position() != body.size()) throw FormatError("checkpoint: trailing bytes after payload");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open '" + path + "' for writing");
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("checkpoint: write to '" + path + "' failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace coind
