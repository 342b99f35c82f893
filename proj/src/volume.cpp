#include "fiberseg/volume.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace fiberseg {

using nlohmann::json;

GridSpec::GridSpec(std::size_t nx, std::size_t ny, std::size_t nz, double voxel_size_um)
    : dims_{nx, ny, nz}, voxel_size_(voxel_size_um) {
  if (nx == 0 || ny == 0 || nz == 0)
    throw ParameterError("grid dims must be positive, got " + dims_string());
  if (!(voxel_size_um > 0.0) || !std::isfinite(voxel_size_um))
    throw ParameterError("voxel size must be positive and finite");
}

std::array<double, 3> GridSpec::extent() const {
  return {dims_[0] * voxel_size_, dims_[1] * voxel_size_, dims_[2] * voxel_size_};
}

std::string GridSpec::dims_string() const {
  std::ostringstream os;
  os << "(" << dims_[0] << "," << dims_[1] << "," << dims_[2] << ")";
  return os.str();
}

void require_same_grid(const GridSpec& a, const GridSpec& b, const std::string& what) {
  if (a.dims() != b.dims() || a.voxel_size() != b.voxel_size())
    throw ShapeError(what + ": grid mismatch " + a.dims_string() + " vs " + b.dims_string());
}

const std::array<std::array<int, 3>, 26>& neighbor_offsets_26() {
  static const auto offsets = [] {
    std::array<std::array<int, 3>, 26> out{};
    std::size_t k = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (dx != 0 || dy != 0 || dz != 0) out[k++] = {dx, dy, dz};
    return out;
  }();
  return offsets;
}

std::array<std::ptrdiff_t, 26> neighbor_index_deltas_26(const GridSpec& grid) {
  std::array<std::ptrdiff_t, 26> out{};
  const auto nx = static_cast<std::ptrdiff_t>(grid.nx());
  const auto nxy = nx * static_cast<std::ptrdiff_t>(grid.ny());
  const auto& offs = neighbor_offsets_26();
  for (std::size_t k = 0; k < offs.size(); ++k)
    out[k] = offs[k][0] + nx * offs[k][1] + nxy * offs[k][2];
  return out;
}

std::pair<std::string, std::string> volume_paths(const std::string& stem) {
  return {stem + ".json", stem + ".raw"};
}

namespace {

template <class T>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<float>() { return "f32"; }
template <>
constexpr const char* dtype_name<std::uint32_t>() { return "u32"; }
template <>
constexpr const char* dtype_name<std::uint8_t>() { return "u8"; }

template <class T>
auto to_bits(T v) {
  if constexpr (std::is_same_v<T, float>)
    return std::bit_cast<std::uint32_t>(v);
  else
    return v;
}

template <class T>
void write_grid(const Grid<T>& v, const std::string& stem) {
  const auto [json_path, raw_path] = volume_paths(stem);
  const auto& g = v.grid();
  json meta = {
      {"dims", {g.nx(), g.ny(), g.nz()}},
      {"voxel_size_um", g.voxel_size()},
      {"dtype", dtype_name<T>()},
      {"order", "x-fastest"},
      {"endianness", "little"},
  };
  {
    std::ofstream out(json_path);
    if (!out) throw IoError("cannot open " + json_path + " for writing");
    out << meta.dump(2) << "\n";
    if (!out) throw IoError("write failed: " + json_path);
  }

  std::vector<unsigned char> bytes(v.size() * sizeof(T));
  auto* p = bytes.data();
  for (const T value : v.data()) {
    auto bits = to_bits(value);
    for (std::size_t b = 0; b < sizeof(T); ++b) *p++ = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
  }
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw IoError("cannot open " + raw_path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + raw_path);
}

template <class T>
Grid<T> decode_grid(const GridSpec& g, const std::vector<unsigned char>& bytes) {
  std::vector<T> data(g.voxel_count());
  const unsigned char* p = bytes.data();
  for (auto& value : data) {
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    p += sizeof(T);
    if constexpr (std::is_same_v<T, float>)
      value = std::bit_cast<float>(static_cast<std::uint32_t>(bits));
    else
      value = static_cast<T>(bits);
  }
  return Grid<T>(g, std::move(data));
}

}  // namespace

void write_volume(const Volume& v, const std::string& stem) { write_grid(v, stem); }
void write_volume(const LabelVolume& v, const std::string& stem) { write_grid(v, stem); }
void write_volume(const MaskVolume& v, const std::string& stem) { write_grid(v, stem); }

AnyVolume read_volume(const std::string& stem) {
  const auto [json_path, raw_path] = volume_paths(stem);
  std::ifstream meta_in(json_path);
  if (!meta_in) throw IoError("cannot open " + json_path);
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    throw IoError("malformed metadata " + json_path + ": " + e.what());
  }

  std::string dtype;
  std::array<std::size_t, 3> dims{};
  double voxel_size = 0.0;
  try {
    dtype = meta.at("dtype").get<std::string>();
    dims = meta.at("dims").get<std::array<std::size_t, 3>>();
    voxel_size = meta.at("voxel_size_um").get<double>();
    if (meta.contains("endianness") && meta["endianness"] != "little")
      throw IoError(json_path + ": unsupported endianness " + meta["endianness"].dump());
    if (meta.contains("order") && meta["order"] != "x-fastest")
      throw IoError(json_path + ": unsupported order " + meta["order"].dump());
  } catch (const json::exception& e) {
    throw IoError("malformed metadata " + json_path + ": " + e.what());
  }

  std::size_t elem = 0;
  if (dtype == "f32" || dtype == "u32")
    elem = 4;
  else if (dtype == "u8")
    elem = 1;
  else
    throw IoError(json_path + ": unknown dtype \"" + dtype + "\"");

  const GridSpec grid(dims[0], dims[1], dims[2], voxel_size);

  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot open " + raw_path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(raw)), std::istreambuf_iterator<char>());
  const std::size_t expected = grid.voxel_count() * elem;
  if (bytes.size() != expected)
    throw IoError(raw_path + ": size mismatch, expected " + std::to_string(expected) + " bytes, got " +
                  std::to_string(bytes.size()));

  if (dtype == "f32") return decode_grid<float>(grid, bytes);
  if (dtype == "u32") return decode_grid<std::uint32_t>(grid, bytes);
  return decode_grid<std::uint8_t>(grid, bytes);
}

Volume read_f32_volume(const std::string& stem) {
  auto any = read_volume(stem);
  if (auto* v = std::get_if<Volume>(&any)) return std::move(*v);
  throw IoError(stem + ": expected dtype f32");
}

LabelVolume read_label_volume(const std::string& stem) {
  auto any = read_volume(stem);
  if (auto* v = std::get_if<LabelVolume>(&any)) return std::move(*v);
  if (auto* m = std::get_if<MaskVolume>(&any)) {
    LabelVolume out(m->grid());
    for (std::size_t i = 0; i < m->size(); ++i) out[i] = (*m)[i];
    return out;
  }
  throw IoError(stem + ": expected dtype u32");
}

}  // namespace fiberseg
