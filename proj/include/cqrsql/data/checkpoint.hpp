#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cqrsql/core/params.hpp"
#include "cqrsql/data/dataset.hpp"

namespace cqrsql {

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

inline constexpr char kCheckpointMagic[4] = {'C', 'Q', 'R', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamStore params;
  Json config;
};

namespace checkpoint_detail {

template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  template <class T>
  T get() {
    need(sizeof(T));
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw CheckpointError(path_ + ": truncated checkpoint");
  }

  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace checkpoint_detail

inline std::string encode_checkpoint(const ParamStore& params, const Json& config) {
  using checkpoint_detail::put;
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = config.dump();
  put<std::uint64_t>(out, cfg.size());
  out += cfg;
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, e] : params.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, 0);  // dtype: f64
    put<std::uint8_t>(out, e.trainable ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) put<std::uint64_t>(out, d);
    for (Real v : e.value.values()) put<double>(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& data, const std::string& path) {
  checkpoint_detail::Reader in(data, path);
  if (data.size() < 4 || std::memcmp(data.data(), kCheckpointMagic, 4) != 0)
    throw CheckpointError(path + ": bad magic bytes, not a checkpoint of a supported version");
  in.bytes(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(path + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  Checkpoint ck;
  const auto cfg_len = in.get<std::uint64_t>();
  try {
    ck.config = Json::parse(in.bytes(cfg_len));
  } catch (const Json::parse_error&) {
    throw CheckpointError(path + ": corrupt config block");
  }
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.bytes(in.get<std::uint32_t>());
    if (in.get<std::uint8_t>() != 0) throw CheckpointError(path + ": unsupported dtype for '" + name + "'");
    const bool trainable = in.get<std::uint8_t>() != 0;
    std::vector<std::size_t> shape(in.get<std::uint32_t>());
    std::size_t n = 1;
    for (auto& d : shape) {
      d = in.get<std::uint64_t>();
      n *= d;
    }
    if (n > data.size()) throw CheckpointError(path + ": truncated checkpoint");
    std::vector<Real> values(n);
    for (auto& v : values) v = in.get<double>();
    try {
      ck.params.insert(name, Tensor(shape, std::move(values)), trainable);
    } catch (const NumericError& e) {
      throw CheckpointError(path + ": " + e.what());
    }
  }
  if (!in.done()) throw CheckpointError(path + ": trailing bytes after tensors");
  return ck;
}

inline void save_checkpoint(const ParamStore& params, const Json& config, const std::string& path) {
  write_text(path, encode_checkpoint(params, config));
}

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path), path); }

/// Throws naming the first parameter whose presence or shape differs from
/// what the model configuration expects.
inline void check_compatible(const ParamStore& loaded, const ParamStore& expected) {
  for (const auto& [name, e] : expected.entries()) {
    if (!loaded.contains(name)) throw CheckpointError("checkpoint is missing parameter '" + name + "'");
    const auto& got = loaded.get(name).shape();
    if (got != e.value.shape())
      throw CheckpointError("parameter '" + name + "' has shape " + shape_str(got) + ", model expects " +
                            shape_str(e.value.shape()));
  }
  for (const auto& [name, _] : loaded.entries())
    if (!expected.contains(name)) throw CheckpointError("checkpoint has unexpected parameter '" + name + "'");
}

}  // namespace cqrsql
