#pragma once

// Readers for the IDX (MNIST) and CIFAR binary formats, plus the versioned
// bundle cache. All readers are strict: a short or overlong payload is a
// FormatError naming the byte offset where the problem was detected.

#include <cstdint>
#include <string>
#include <vector>

#include "dynlab/binary_io.hpp"
#include "dynlab/dataset.hpp"

namespace dynlab {

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

// IDX: two zero bytes, a type byte (only 0x08 = unsigned byte is supported),
// a rank byte, then one big-endian u32 per dimension and the payload.
inline IdxArray parse_idx(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4) throw FormatError("IDX header truncated", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("bad IDX magic", 0);
  if (bytes[2] != 0x08) throw FormatError("unsupported IDX element type", 2);
  const std::size_t rank = bytes[3];
  if (rank == 0) throw FormatError("IDX rank must be positive", 3);
  if (bytes.size() < 4 + 4 * rank) throw FormatError("IDX dimension table truncated", bytes.size());
  IdxArray arr;
  std::size_t count = 1;
  for (std::size_t r = 0; r < rank; ++r) {
    const std::size_t at = 4 + 4 * r;
    const std::uint32_t d = (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
                            (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
    if (d == 0) throw FormatError("IDX dimension is zero", at);
    arr.dims.push_back(d);
    count *= d;
  }
  const std::size_t payload = 4 + 4 * rank;
  if (bytes.size() < payload + count) throw FormatError("IDX payload truncated", bytes.size());
  if (bytes.size() > payload + count) throw FormatError("IDX has trailing bytes", payload + count);
  arr.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(payload), bytes.end());
  return arr;
}

inline std::vector<unsigned char> encode_idx(const IdxArray& arr) {
  std::vector<unsigned char> out{0, 0, 0x08, static_cast<unsigned char>(arr.dims.size())};
  for (auto d : arr.dims) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<unsigned char>(d >> shift));
  }
  out.insert(out.end(), arr.values.begin(), arr.values.end());
  return out;
}

inline IdxArray read_idx(const std::string& path) { return parse_idx(io::read_file(path)); }

inline void write_idx(const std::string& path, const IdxArray& arr) {
  io::write_file(path, encode_idx(arr));
}

// Image file of rank 3 (N x H x W) and label file of rank 1 (N). Pixels are
// scaled to [0, 1]; everything is tagged train.
inline DatasetBundle bundle_from_idx(const IdxArray& images, const IdxArray& labels) {
  if (images.dims.size() != 3) throw FormatError("IDX images must be rank 3", 3);
  if (labels.dims.size() != 1) throw FormatError("IDX labels must be rank 1", 3);
  if (images.dims[0] != labels.dims[0]) throw FormatError("IDX image/label counts differ", 4);
  const std::size_t n = images.dims[0], h = images.dims[1], w = images.dims[2];
  DatasetBundle b;
  b.geometry = ImageGeometry{1, h, w};
  std::vector<double> data(images.values.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = images.values[i] / 255.0;
  b.features = Tensor({n, h * w}, std::move(data));
  int max_label = 0;
  for (auto v : labels.values) {
    b.targets.push_back(v);
    max_label = std::max(max_label, static_cast<int>(v));
  }
  b.classes = static_cast<std::size_t>(max_label) + 1;
  b.splits.assign(n, Split::train);
  return b;
}

inline DatasetBundle load_idx(const std::string& images_path, const std::string& labels_path) {
  return bundle_from_idx(read_idx(images_path), read_idx(labels_path));
}

enum class CifarKind { cifar10, cifar100_fine, cifar100_coarse };

// CIFAR-10 records are 1 label byte + 3072 pixel bytes; CIFAR-100 records carry
// a coarse and a fine label byte before the pixels. Pixels are channel-major
// 3 x 32 x 32.
inline DatasetBundle parse_cifar_binary(const std::vector<unsigned char>& bytes, CifarKind kind) {
  constexpr std::size_t pixels = 3 * 32 * 32;
  const std::size_t label_bytes = kind == CifarKind::cifar10 ? 1 : 2;
  const std::size_t record = label_bytes + pixels;
  if (bytes.empty()) throw FormatError("CIFAR file is empty", 0);
  if (bytes.size() % record != 0) {
    throw FormatError("CIFAR file ends inside a record", bytes.size() - bytes.size() % record);
  }
  const std::size_t n = bytes.size() / record;
  const std::size_t classes = kind == CifarKind::cifar10 ? 10 : (kind == CifarKind::cifar100_fine ? 100 : 20);
  DatasetBundle b;
  b.classes = classes;
  b.geometry = ImageGeometry{3, 32, 32};
  b.features = Tensor({n, pixels});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = i * record;
    const int label = kind == CifarKind::cifar100_fine ? bytes[at + 1] : bytes[at];
    if (static_cast<std::size_t>(label) >= classes) throw FormatError("CIFAR label out of range", at);
    b.targets.push_back(label);
    auto row = b.features.row(i);
    for (std::size_t j = 0; j < pixels; ++j) row[j] = bytes[at + label_bytes + j] / 255.0;
  }
  b.splits.assign(n, Split::train);
  return b;
}

inline DatasetBundle load_cifar_binary(const std::string& path, CifarKind kind = CifarKind::cifar10) {
  return parse_cifar_binary(io::read_file(path), kind);
}

// Bundle cache -------------------------------------------------------------------
//
//   "DYNLBNDL" u32 version  u64 N  u64 d  u64 classes
//   u8 has_geometry [u64 channels u64 height u64 width]
//   u64 n_channel_stats, then mean[] and std[] (f64)
//   f64 realized_flip_fraction
//   N*d f64 features, N i32 targets, u8 has_true [N i32 true_targets], N u8 splits

inline constexpr std::uint32_t kBundleVersion = 1;

inline std::vector<unsigned char> encode_bundle(const DatasetBundle& b) {
  b.validate();
  io::Writer w;
  w.bytes("DYNLBNDL", 8);
  w.u32(kBundleVersion);
  w.u64(b.size());
  w.u64(b.dim());
  w.u64(b.classes);
  w.u8(b.geometry ? 1 : 0);
  if (b.geometry) {
    w.u64(b.geometry->channels);
    w.u64(b.geometry->height);
    w.u64(b.geometry->width);
  }
  w.u64(b.channel_mean.size());
  for (double v : b.channel_mean) w.f64(v);
  for (double v : b.channel_std) w.f64(v);
  w.f64(b.realized_flip_fraction);
  for (double v : b.features.data()) w.f64(v);
  for (int y : b.targets) w.i32(y);
  w.u8(b.true_targets ? 1 : 0);
  if (b.true_targets) {
    for (int y : *b.true_targets) w.i32(y);
  }
  for (auto s : b.splits) w.u8(static_cast<std::uint8_t>(s));
  return w.buffer();
}

inline DatasetBundle decode_bundle(const std::vector<unsigned char>& bytes) {
  io::Reader r(bytes);
  r.expect_magic("DYNLBNDL", 8);
  const auto version_at = r.offset();
  if (r.u32() != kBundleVersion) throw FormatError("unsupported bundle version", version_at);
  const std::size_t n = r.u64(), d = r.u64();
  DatasetBundle b;
  b.classes = r.u64();
  if (n == 0 || d == 0) throw FormatError("bundle has empty extents", r.offset());
  if (r.u8()) {
    ImageGeometry g;
    g.channels = r.u64();
    g.height = r.u64();
    g.width = r.u64();
    b.geometry = g;
  }
  const std::size_t stats = r.u64();
  r.need(stats * 16, "channel statistics");
  for (std::size_t i = 0; i < stats; ++i) b.channel_mean.push_back(r.f64());
  for (std::size_t i = 0; i < stats; ++i) b.channel_std.push_back(r.f64());
  b.realized_flip_fraction = r.f64();
  r.need(n * d * 8, "features");
  std::vector<double> data(n * d);
  for (auto& v : data) v = r.f64();
  b.features = Tensor({n, d}, std::move(data));
  r.need(n * 4, "targets");
  for (std::size_t i = 0; i < n; ++i) b.targets.push_back(r.i32());
  if (r.u8()) {
    r.need(n * 4, "true targets");
    std::vector<int> t(n);
    for (auto& y : t) y = r.i32();
    b.true_targets = std::move(t);
  }
  r.need(n, "splits");
  for (std::size_t i = 0; i < n; ++i) {
    const auto at = r.offset();
    const auto s = r.u8();
    if (s > 3) throw FormatError("bad split tag", at);
    b.splits.push_back(static_cast<Split>(s));
  }
  r.expect_end();
  b.validate();
  return b;
}

inline void save_bundle(const DatasetBundle& b, const std::string& path) {
  io::write_file(path, encode_bundle(b));
}

inline DatasetBundle load_bundle(const std::string& path) { return decode_bundle(io::read_file(path)); }

}  // namespace dynlab
