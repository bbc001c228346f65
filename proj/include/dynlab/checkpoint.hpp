#pragma once

// Parameter checkpoints.
//
//   offset  size  field
//   0       8     magic "DYNLCKPT"
//   8       4     format version (u32, currently 1)
//   12      4     descriptor length L (u32)
//   16      L     topology descriptor, e.g. "dense:6:8;relu:8;dense:8:3"
//   16+L    8     param_count (u64)
//   24+L    8*P   parameters, float64 little-endian

#include <cstdint>
#include <string>
#include <vector>

#include "dynlab/binary_io.hpp"
#include "dynlab/network.hpp"

namespace dynlab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<unsigned char> encode_checkpoint(const Network& net) {
  io::Writer w;
  w.bytes("DYNLCKPT", 8);
  w.u32(kCheckpointVersion);
  w.str(net.descriptor());
  w.u64(net.param_count());
  for (double p : net.params()) w.f64(p);
  return w.buffer();
}

inline Network decode_checkpoint(const std::vector<unsigned char>& bytes) {
  io::Reader r(bytes);
  r.expect_magic("DYNLCKPT", 8);
  const auto version_at = r.offset();
  if (r.u32() != kCheckpointVersion) throw FormatError("unsupported checkpoint version", version_at);
  const auto descriptor_at = r.offset();
  const std::string descriptor = r.str();
  Network net;
  try {
    net = Network::from_descriptor(descriptor);
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad topology descriptor: ") + e.what(), descriptor_at);
  }
  const auto count_at = r.offset();
  const std::uint64_t count = r.u64();
  if (count != net.param_count()) throw FormatError("param_count disagrees with topology", count_at);
  std::vector<double> params(count);
  r.need(count * 8, "parameters");
  for (auto& p : params) p = r.f64();
  r.expect_end();
  net.set_params(std::move(params));
  return net;
}

inline void save_checkpoint(const Network& net, const std::string& path) {
  io::write_file(path, encode_checkpoint(net));
}

inline Network load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace dynlab
