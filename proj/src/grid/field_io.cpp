#include "homolab/field_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace homolab {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

void write_snapshot(std::ostream& os, const Field& f) {
  if (f.shape().size() > 4) throw std::invalid_argument("snapshot: tensor rank above 4");
  std::array<std::uint32_t, 3> words{static_cast<std::uint32_t>(f.grid().dim),
                                     static_cast<std::uint32_t>(f.grid().n),
                                     static_cast<std::uint32_t>(f.shape().size())};
  std::array<std::uint16_t, 4> dims{};
  for (std::size_t i = 0; i < f.shape().size(); ++i) dims[i] = static_cast<std::uint16_t>(f.shape()[i]);
  const double L = f.grid().length;
  os.write(kSnapshotMagic, 4);
  os.write(reinterpret_cast<const char*>(words.data()), sizeof(words));
  os.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
  os.write(reinterpret_cast<const char*>(&L), sizeof(L));
  const auto v = f.values();
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!os) throw std::runtime_error("snapshot: write failed");
}

void write_snapshot(const std::filesystem::path& path, const Field& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("snapshot: cannot open " + path.string());
  write_snapshot(os, f);
}

Field read_snapshot(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kSnapshotMagic, 4) != 0) throw std::runtime_error("snapshot: bad magic");
  std::array<std::uint32_t, 3> words{};
  std::array<std::uint16_t, 4> dims{};
  double L = 0.0;
  is.read(reinterpret_cast<char*>(words.data()), sizeof(words));
  is.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  is.read(reinterpret_cast<char*>(&L), sizeof(L));
  if (!is) throw std::runtime_error("snapshot: truncated header");
  const auto grid = build_grid(static_cast<int>(words[0]), static_cast<int>(words[1]), L);
  if (words[2] > 4) throw std::runtime_error("snapshot: tensor rank above 4");
  Shape shape;
  for (std::uint32_t i = 0; i < words[2]; ++i) shape.push_back(static_cast<int>(dims[i]));
  std::vector<double> values(shape_size(shape) * grid.sites());
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!is) throw std::runtime_error("snapshot: truncated payload");
  return Field(grid, std::move(shape), std::move(values));
}

Field read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("snapshot: cannot open " + path.string());
  return read_snapshot(is);
}

void write_field_csv(std::ostream& os, const Field& f) {
  const auto& g = f.grid();
  os << "site";
  for (int i = 0; i < g.dim; ++i) os << ",x" << i;
  for (std::size_t c = 0; c < f.components(); ++c) os << ",v" << c;
  os << "\n" << std::setprecision(17);
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const auto p = g.position(x);
    os << x;
    for (int i = 0; i < g.dim; ++i) os << "," << p[i];
    for (std::size_t c = 0; c < f.components(); ++c) os << "," << f(c, x);
    os << "\n";
  }
}

void write_field_csv(const std::filesystem::path& path, const Field& f) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("field csv: cannot open " + path.string());
  write_field_csv(os, f);
}

}  // namespace homolab
