#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pgalstm/core/params.hpp"
#include "pgalstm/errors.hpp"

namespace pgalstm {

// Checkpoint byte layout (all integers little-endian):
//
//   magic        8 bytes  "PGACKPT\0"
//   version      u32      kCheckpointVersion
//   model id     u32 length + UTF-8 bytes ("pga", "lstm", "pgl", "encoder")
//   count        u32      number of tensors
//   manifest     count x { u32 name length, name bytes, u8 weight flag,
//                          u32 rank, rank x u64 dims }
//   payload      IEEE-754 binary64 little-endian values, tensors in manifest
//                order, each row-major
//
// Doubles are written through their bit pattern, so save/load round-trips
// bit-exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', 'G', 'A', 'C', 'K', 'P', 'T', '\0'};

struct Checkpoint {
  std::string model_id;
  ParamSet params;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.model_id.size()));
  out += ckpt.model_id;
  detail::put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& e : ckpt.params.entries()) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    out.push_back(e.weight ? 1 : 0);
    detail::put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) detail::put_u64(out, d);
  }
  for (const auto& e : ckpt.params.entries()) {
    for (double v : e.value.values()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::ByteReader in(bytes);
  if (in.str(sizeof kCheckpointMagic) != std::string(kCheckpointMagic, sizeof kCheckpointMagic)) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto version = in.uint(4);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.model_id = in.str(in.uint(4));
  const auto count = in.uint(4);
  struct Header {
    std::string name;
    bool weight;
    Shape shape;
  };
  std::vector<Header> headers;
  for (std::uint64_t i = 0; i < count; ++i) {
    Header h;
    h.name = in.str(in.uint(4));
    h.weight = in.uint(1) != 0;
    const auto rank = in.uint(4);
    for (std::uint64_t r = 0; r < rank; ++r) h.shape.push_back(in.uint(8));
    headers.push_back(std::move(h));
  }
  for (auto& h : headers) {
    std::vector<double> values(shape_size(h.shape));
    for (auto& v : values) v = std::bit_cast<double>(in.uint(8));
    ckpt.params.add(std::move(h.name), Tensor(std::move(h.shape), std::move(values)), h.weight);
  }
  if (!in.done()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  const auto bytes = encode_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace pgalstm
