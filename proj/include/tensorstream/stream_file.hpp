#pragma once

// Flat binary recording of a sample stream, for replay.
//
// All fields are little-endian:
//   offset  0  8 bytes   magic "TSSTRM01"
//   offset  8  u64 x 3   p1, p2, p3
//   offset 32  u64       sample count
//   offset 40  records   per sample: p1*p2*p3 f64 (X, row-major), then f64 y

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>

#include "tensorstream/sample.hpp"

namespace tensorstream {

inline constexpr char kStreamMagic[8] = {'T', 'S', 'S', 'T', 'R', 'M', '0', '1'};
inline constexpr std::uint64_t kStreamHeaderBytes = 40;

/// Appends samples; the count field is patched when the writer closes.
class StreamFileWriter {
 public:
  StreamFileWriter(const std::filesystem::path& path, const Dims3& dims);
  ~StreamFileWriter();
  StreamFileWriter(const StreamFileWriter&) = delete;
  StreamFileWriter& operator=(const StreamFileWriter&) = delete;

  void append(const StreamSampled& s);
  void close();
  std::uint64_t count() const { return count_; }

 private:
  std::ofstream out_;
  Dims3 dims_;
  std::uint64_t count_ = 0;
};

/// Validates the header and the file length up front, then replays samples.
class StreamFileReader {
 public:
  explicit StreamFileReader(const std::filesystem::path& path);

  std::optional<StreamSampled> next();

  const Dims3& dims() const { return dims_; }
  std::uint64_t count() const { return count_; }
  std::uint64_t remaining() const { return count_ - read_; }

 private:
  std::ifstream in_;
  Dims3 dims_{};
  std::uint64_t count_ = 0;
  std::uint64_t read_ = 0;
};

}  // namespace tensorstream
