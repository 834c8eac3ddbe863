#include "grainmap/volume.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace grainmap {

namespace fs = std::filesystem;
using nlohmann::json;

Label LabelVolume::max_label() const {
  Label m = 0;
  for (Label l : labels) m = std::max(m, l);
  return m;
}

GrainScan GrainScan::from_volume(LabelVolume volume, std::optional<Label> k) {
  const auto& d = volume.dims;
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) throw DataError("dims must be positive");
  if (volume.labels.size() != d.count())
    throw DataError("size mismatch: label count does not match dims");
  if (!(volume.spacing.array() > 0.0).all() || !volume.spacing.allFinite())
    throw DataError("spacing components must be positive");
  const Label kk = k.value_or(volume.max_label());
  if (kk == 0) throw DataError("label 0 encountered in grain scan");
  std::vector<std::size_t> counts(static_cast<std::size_t>(kk) + 1, 0);
  for (Label l : volume.labels) {
    if (l == 0) throw DataError("label 0 encountered in grain scan");
    if (l > kk)
      throw DataError("label " + std::to_string(l) + " exceeds k=" + std::to_string(kk));
    ++counts[l];
  }
  for (Label i = 1; i <= kk; ++i)
    if (counts[i] == 0) throw DataError("grain " + std::to_string(i) + " has no voxels");
  return GrainScan(std::move(volume), kk);
}

VolumeHeader read_header(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw DataError("cannot read header " + header_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed header " + header_path.string() + ": " + e.what());
  }
  VolumeHeader h;
  try {
    const auto dims = j.at("dims").get<std::vector<int>>();
    const auto spacing = j.at("spacing_um").get<std::vector<double>>();
    if (dims.size() != 3 || spacing.size() != 3)
      throw DataError("dims and spacing_um must have 3 entries");
    h.dims = {dims[0], dims[1], dims[2]};
    h.spacing = {spacing[0], spacing[1], spacing[2]};
    if (j.contains("k") && !j["k"].is_null()) h.k = j["k"].get<Label>();
    const auto dtype = j.value("dtype", std::string("uint16"));
    if (dtype == "uint16")
      h.scalar_bytes = 2;
    else if (dtype == "uint32")
      h.scalar_bytes = 4;
    else
      throw DataError("unsupported dtype " + dtype);
    h.byte_order = j.value("byte_order", std::string("little-endian"));
  } catch (const json::exception& e) {
    throw DataError("invalid header " + header_path.string() + ": " + e.what());
  }
  if (h.byte_order != "little-endian")
    throw DataError("unsupported byte order " + h.byte_order);
  if (h.k && h.scalar_bytes == 2 && *h.k > 0xFFFF)
    throw DataError("uint16 labels cannot hold k=" + std::to_string(*h.k));
  return h;
}

void write_header(const VolumeHeader& h, const fs::path& header_path) {
  json j;
  j["dims"] = {h.dims.nx, h.dims.ny, h.dims.nz};
  j["spacing_um"] = {h.spacing.x(), h.spacing.y(), h.spacing.z()};
  j["k"] = h.k ? json(*h.k) : json(nullptr);
  j["dtype"] = h.scalar_bytes == 2 ? "uint16" : "uint32";
  j["byte_order"] = h.byte_order;
  std::ofstream out(header_path);
  if (!out) throw DataError("cannot write header " + header_path.string());
  out << j.dump(2) << '\n';
}

LabelVolume load_labels(const fs::path& header_path, const fs::path& data_path,
                        std::optional<Label>* header_k) {
  const VolumeHeader h = read_header(header_path);
  if (h.dims.nx <= 0 || h.dims.ny <= 0 || h.dims.nz <= 0)
    throw DataError("dims must be positive");
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot read data " + data_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::size_t n = h.dims.count();
  if (bytes.size() != n * static_cast<std::size_t>(h.scalar_bytes))
    throw DataError("size mismatch: expected " + std::to_string(n * h.scalar_bytes) +
                    " bytes, found " + std::to_string(bytes.size()));
  LabelVolume v;
  v.dims = h.dims;
  v.spacing = h.spacing;
  v.labels.resize(n);
  const auto w = static_cast<std::size_t>(h.scalar_bytes);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = bytes.data() + i * w;
    Label l = 0;
    for (std::size_t b = 0; b < w; ++b) l |= static_cast<Label>(p[b]) << (8 * b);
    v.labels[i] = l;
  }
  if (header_k) *header_k = h.k;
  return v;
}

void save_labels(const LabelVolume& volume, std::optional<Label> k,
                 const fs::path& header_path, const fs::path& data_path) {
  VolumeHeader h;
  h.dims = volume.dims;
  h.spacing = volume.spacing;
  h.k = k;
  const Label top = std::max(volume.max_label(), k.value_or(0));
  h.scalar_bytes = top <= 0xFFFF ? 2 : 4;
  write_header(h, header_path);

  const auto w = static_cast<std::size_t>(h.scalar_bytes);
  std::vector<unsigned char> bytes(volume.labels.size() * w);
  for (std::size_t i = 0; i < volume.labels.size(); ++i)
    for (std::size_t b = 0; b < w; ++b)
      bytes[i * w + b] = static_cast<unsigned char>((volume.labels[i] >> (8 * b)) & 0xFF);
  std::ofstream out(data_path, std::ios::binary);
  if (!out) throw DataError("cannot write data " + data_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + data_path.string());
}

GrainScan load_scan(const fs::path& header_path, const fs::path& data_path) {
  std::optional<Label> k;
  LabelVolume v = load_labels(header_path, data_path, &k);
  return GrainScan::from_volume(std::move(v), k);
}

void save_scan(const GrainScan& scan, const fs::path& header_path, const fs::path& data_path) {
  save_labels(scan.volume(), scan.k(), header_path, data_path);
}

Axis parse_axis(const std::string& name) {
  if (name == "x" || name == "X") return Axis::X;
  if (name == "y" || name == "Y") return Axis::Y;
  if (name == "z" || name == "Z") return Axis::Z;
  throw ConfigError("unknown axis '" + name + "' (expected x, y or z)");
}

std::array<std::uint8_t, 3> label_color(Label label) {
  if (label >= (1u << 24)) throw DataError("label too large for 24-bit color map");
  // Odd multipliers and xor-shifts are bijections on 24-bit words and fix 0.
  constexpr std::uint32_t mask = 0xFFFFFF;
  std::uint32_t v = label;
  v = (v * 0x2545F5u) & mask;
  v ^= v >> 11;
  v = (v * 0x7FEB35u) & mask;
  v ^= v >> 13;
  return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>((v >> 8) & 0xFF),
          static_cast<std::uint8_t>(v & 0xFF)};
}

void export_slice(const LabelVolume& volume, Axis axis, int index, const fs::path& out_path) {
  const auto& d = volume.dims;
  const int a = static_cast<int>(axis);
  if (index < 0 || index >= d[a])
    throw DataError("slice index " + std::to_string(index) + " out of range [0," +
                    std::to_string(d[a]) + ")");
  // Image axes: the two remaining volume axes, lower axis index runs along width.
  const int u = a == 0 ? 1 : 0;
  const int w = a == 2 ? 1 : 2;
  const int width = d[u];
  const int height = d[w];
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 3);
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      std::array<int, 3> c{};
      c[a] = index;
      c[u] = col;
      c[w] = row;
      const auto rgb = label_color(volume.labels[volume.index(c[0], c[1], c[2])]);
      const std::size_t p = (static_cast<std::size_t>(row) * width + col) * 3;
      pixels[p] = rgb[0];
      pixels[p + 1] = rgb[1];
      pixels[p + 2] = rgb[2];
    }
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw DataError("cannot write " + out_path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
}

}  // namespace grainmap
