#pragma once

#include <filesystem>
#include <iosfwd>

#include "homolab/grid.hpp"

namespace homolab {

// Snapshot layout, little-endian, 32-byte header:
//   bytes  0..3   magic "HLF1"
//   bytes  4..7   uint32 d
//   bytes  8..11  uint32 n
//   bytes 12..15  uint32 tensor rank r (0..4)
//   bytes 16..23  uint16 dims[4], unused entries 0
//   bytes 24..31  float64 period L
// followed by components * n^d float64 values in component-major order
// (each component row-major over sites).

inline constexpr char kSnapshotMagic[4] = {'H', 'L', 'F', '1'};
inline constexpr std::size_t kSnapshotHeaderBytes = 32;

void write_snapshot(std::ostream& os, const Field& f);
void write_snapshot(const std::filesystem::path& path, const Field& f);
Field read_snapshot(std::istream& is);
Field read_snapshot(const std::filesystem::path& path);

/// CSV with header `site,x0[,x1[,x2]],v0,v1,...`.
void write_field_csv(std::ostream& os, const Field& f);
void write_field_csv(const std::filesystem::path& path, const Field& f);

}  // namespace homolab
