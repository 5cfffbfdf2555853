#include "tensorstream/stream_file.hpp"

#include <bit>
#include <cstring>
#include <string>
#include <vector>

namespace tensorstream {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xff);
    return r;
  }
}

void put_u64(std::ostream& out, std::uint64_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little(v);
}

}  // namespace

StreamFileWriter::StreamFileWriter(const std::filesystem::path& path, const Dims3& dims)
    : out_(path, std::ios::binary | std::ios::trunc), dims_(dims) {
  if (!out_) throw FormatError("cannot open stream file for writing: " + path.string());
  out_.write(kStreamMagic, sizeof kStreamMagic);
  for (auto d : dims) put_u64(out_, static_cast<std::uint64_t>(d));
  put_u64(out_, 0);
}

StreamFileWriter::~StreamFileWriter() {
  try {
    close();
  } catch (...) {
  }
}

void StreamFileWriter::append(const StreamSampled& s) {
  if (!out_.is_open()) throw FormatError("stream writer already closed");
  if (s.x.dims() != dims_)
    throw DimensionError("stream writer: sample dims " + dims_string(s.x.dims()) +
                         " differ from " + dims_string(dims_));
  for (Index i = 0; i < s.x.size(); ++i) put_f64(out_, s.x.data()[i]);
  put_f64(out_, s.y);
  ++count_;
}

void StreamFileWriter::close() {
  if (!out_.is_open()) return;
  out_.seekp(32);
  put_u64(out_, count_);
  out_.close();
  if (out_.fail()) throw FormatError("failed to finalize stream file");
}

StreamFileReader::StreamFileReader(const std::filesystem::path& path)
    : in_(path, std::ios::binary) {
  if (!in_) throw FormatError("cannot open stream file: " + path.string());
  char magic[8];
  in_.read(magic, sizeof magic);
  if (!in_ || std::memcmp(magic, kStreamMagic, sizeof magic) != 0)
    throw FormatError("not a tensorstream recording: " + path.string());
  for (auto& d : dims_) {
    const auto v = get_u64(in_);
    if (v == 0 || v > (1ULL << 20)) throw FormatError("stream file has invalid dims");
    d = static_cast<Index>(v);
  }
  count_ = get_u64(in_);
  if (!in_) throw FormatError("stream file header truncated: " + path.string());

  const std::uint64_t record = (static_cast<std::uint64_t>(dims_[0] * dims_[1] * dims_[2]) + 1) * 8;
  const std::uint64_t expected = kStreamHeaderBytes + count_ * record;
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected)
    throw FormatError("stream file " + path.string() + " has " + std::to_string(actual) +
                      " bytes, header promises " + std::to_string(expected));
}

std::optional<StreamSampled> StreamFileReader::next() {
  if (read_ >= count_) return std::nullopt;
  StreamSampled s{Tensor3d(dims_), 0.0};
  std::vector<std::uint64_t> raw(static_cast<std::size_t>(s.x.size()) + 1);
  in_.read(reinterpret_cast<char*>(raw.data()),
           static_cast<std::streamsize>(raw.size() * sizeof(std::uint64_t)));
  if (!in_) throw FormatError("stream file ended early");
  for (Index i = 0; i < s.x.size(); ++i)
    s.x.data()[i] = std::bit_cast<double>(to_little(raw[static_cast<std::size_t>(i)]));
  s.y = std::bit_cast<double>(to_little(raw.back()));
  ++read_;
  return s;
}

}  // namespace tensorstream
