#pragma once

// LTEN binary tensor files.
//
//   "LTEN" | version u32 | rank u32 | dims u64[rank] | f32 payload
//
// All integers and floats little-endian. The low byte of `version` is the
// format revision (currently 1); the upper 24 bits are a free tag that writers
// may use (the prompt exporter stores its projection seed there).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ler/tensor.hpp"

namespace ler {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kLtenRevision = 1;
inline constexpr std::size_t kLtenMaxRank = 8;

struct LtenHeader {
  std::uint32_t version = kLtenRevision;
  Shape shape;
  std::uint32_t revision() const { return version & 0xFFu; }
  std::uint32_t tag() const { return version >> 8; }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "LTEN I/O assumes a little-endian host");

template <typename U>
void write_pod(std::ostream& out, U value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <typename U>
U read_pod(std::istream& in, const char* what) {
  U value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(U))) {
    throw FormatError(std::string("LTEN: truncated while reading ") + what);
  }
  return value;
}

}  // namespace detail

inline void write_lten(std::ostream& out, const Shape& shape, std::span<const float> values,
                       std::uint32_t tag = 0) {
  if (shape_numel(shape) != values.size()) throw DimensionError("write_lten: shape/data size mismatch");
  out.write("LTEN", 4);
  detail::write_pod<std::uint32_t>(out, (tag << 8) | kLtenRevision);
  detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) detail::write_pod<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!out) throw std::runtime_error("LTEN: write failed");
}

inline void write_lten(std::ostream& out, const Tensor& t, std::uint32_t tag = 0) {
  write_lten(out, t.shape(), t.data(), tag);
}

inline Tensor read_lten(std::istream& in, LtenHeader* header = nullptr) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("LTEN: truncated before magic");
  if (std::memcmp(magic, "LTEN", 4) != 0) throw FormatError("LTEN: bad magic");
  LtenHeader h;
  h.version = detail::read_pod<std::uint32_t>(in, "version");
  if (h.revision() != kLtenRevision) {
    throw FormatError("LTEN: unsupported format revision " + std::to_string(h.revision()));
  }
  const auto rank = detail::read_pod<std::uint32_t>(in, "rank");
  if (rank == 0 || rank > kLtenMaxRank) throw FormatError("LTEN: invalid rank " + std::to_string(rank));
  std::uint64_t total = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = detail::read_pod<std::uint64_t>(in, "dims");
    if (d == 0 || d > (std::uint64_t{1} << 32) || total * d > (std::uint64_t{1} << 34)) {
      throw FormatError("LTEN: implausible dimension " + std::to_string(d));
    }
    total *= d;
    h.shape.push_back(static_cast<std::size_t>(d));
  }
  std::vector<float> values(total);
  if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * sizeof(float)))) {
    throw FormatError("LTEN: truncated payload");
  }
  if (header) *header = h;
  return Tensor::from(h.shape, std::move(values));
}

inline void save_lten(const std::string& path, const Tensor& t, std::uint32_t tag = 0) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_lten(out, t, tag);
}

inline Tensor load_lten(const std::string& path, LtenHeader* header = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_lten(in, header);
}

}  // namespace ler
