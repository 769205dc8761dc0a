#pragma once

// QTNS: a minimal container for named float32 tensors.
//
// Layout (all integers little-endian):
//   "QTNS"            4 bytes magic
//   version           u32 (currently 1)
//   entry count       u64
//   per entry:
//     name length     u32, followed by that many UTF-8 bytes
//     axis count      u32
//     dims            u64 x axis count
//     dtype           u32 (0 = f32)
//     data            product(dims) x 4 bytes, IEEE-754 binary32
// The file ends after the last entry; trailing bytes are rejected.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "weightpress/error.hpp"
#include "weightpress/tensor.hpp"

namespace weightpress {

inline constexpr std::string_view kArchiveMagic = "QTNS";
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::uint32_t kDtypeF32 = 0;

class TensorArchive {
 public:
  using Entry = std::pair<std::string, DenseTensor>;

  TensorArchive() = default;

  /// Appends an entry; names must be unique.
  void add(std::string name, DenseTensor tensor) {
    if (contains(name)) throw DuplicateNameError("duplicate tensor name '" + name + "'");
    tensor.set_name(name);
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }

  const DenseTensor* find(std::string_view name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  const DenseTensor& at(std::string_view name) const {
    const DenseTensor* t = find(name);
    if (!t) throw ValueError("no tensor named '" + std::string(name) + "'");
    return *t;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::uint32_t version() const noexcept { return kArchiveVersion; }

  friend bool operator==(const TensorArchive& a, const TensorArchive& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw TruncatedError(std::string("archive truncated while reading ") + what +
                           ": need " + std::to_string(n) + " bytes, have " +
                           std::to_string(remaining()));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Serializes an archive. Output is a pure function of the entries.
inline std::vector<std::uint8_t> write_archive(const TensorArchive& archive) {
  detail::ByteWriter w;
  w.raw(kArchiveMagic.data(), kArchiveMagic.size());
  w.le<std::uint32_t>(kArchiveVersion);
  w.le<std::uint64_t>(archive.size());
  for (const auto& [name, t] : archive.entries()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) w.le<std::uint64_t>(d);
    w.le<std::uint32_t>(kDtypeF32);
    for (float v : t.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

inline TensorArchive read_archive(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < kArchiveMagic.size() ||
      std::memcmp(bytes.data(), kArchiveMagic.data(), kArchiveMagic.size()) != 0) {
    throw BadMagicError("not a QTNS archive (bad magic)");
  }
  r.take(kArchiveMagic.size(), "magic");
  const auto version = r.le<std::uint32_t>("version");
  if (version != kArchiveVersion) {
    throw UnsupportedVersionError("unsupported QTNS version " + std::to_string(version));
  }
  const auto count = r.le<std::uint64_t>("entry count");

  TensorArchive archive;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = r.le<std::uint32_t>("name length");
    auto name_bytes = r.take(name_len, "name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto ndim = r.le<std::uint32_t>("axis count");
    if (ndim == 0) throw LengthMismatchError("entry '" + name + "' has no axes");
    Shape shape(ndim);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      const auto dim = r.le<std::uint64_t>("dimension");
      if (dim == 0) throw LengthMismatchError("entry '" + name + "' has a zero-sized axis");
      if (numel > std::numeric_limits<std::uint64_t>::max() / 4 / dim) {
        throw LengthMismatchError("entry '" + name + "' element count overflows");
      }
      numel *= dim;
      d = static_cast<std::size_t>(dim);
    }
    const auto dtype = r.le<std::uint32_t>("dtype");
    if (dtype != kDtypeF32) {
      throw UnsupportedDtypeError("entry '" + name + "' has unsupported dtype " +
                                  std::to_string(dtype));
    }
    auto raw = r.take(static_cast<std::size_t>(numel * 4), "tensor data");
    std::vector<float> data(static_cast<std::size_t>(numel));
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        bits |= static_cast<std::uint32_t>(raw[4 * i + k]) << (8 * k);
      }
      data[i] = std::bit_cast<float>(bits);
    }
    archive.add(std::move(name), DenseTensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) {
    throw LengthMismatchError(std::to_string(r.remaining()) +
                              " trailing bytes after the declared entries");
  }
  return archive;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read error on '" + path.string() + "'");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write error on '" + path.string() + "'");
}

inline TensorArchive load_archive(const std::filesystem::path& path) {
  return read_archive(read_file_bytes(path));
}

inline void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  write_file_bytes(path, write_archive(archive));
}

}  // namespace weightpress
