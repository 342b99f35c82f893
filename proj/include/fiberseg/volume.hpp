#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fiberseg/errors.hpp"

namespace fiberseg {

/// Voxel counts plus the isotropic voxel edge length in micrometers.
class GridSpec {
 public:
  GridSpec(std::size_t nx, std::size_t ny, std::size_t nz, double voxel_size_um);

  std::size_t nx() const { return dims_[0]; }
  std::size_t ny() const { return dims_[1]; }
  std::size_t nz() const { return dims_[2]; }
  const std::array<std::size_t, 3>& dims() const { return dims_; }
  double voxel_size() const { return voxel_size_; }

  std::size_t voxel_count() const { return dims_[0] * dims_[1] * dims_[2]; }

  /// Physical extent along each axis (dims * voxel_size).
  std::array<double, 3> extent() const;

  /// The single linear index convention of the toolkit: x fastest.
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_[0] * (y + dims_[1] * z);
  }

  bool contains(std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && static_cast<std::size_t>(x) < dims_[0] &&
           static_cast<std::size_t>(y) < dims_[1] && static_cast<std::size_t>(z) < dims_[2];
  }

  std::string dims_string() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;

 private:
  std::array<std::size_t, 3> dims_;
  double voxel_size_;
};

/// Dense 3D grid over a GridSpec.
template <class T>
class Grid {
 public:
  using value_type = T;

  explicit Grid(GridSpec grid, T fill = T{}) : grid_(grid), data_(grid.voxel_count(), fill) {}

  Grid(GridSpec grid, std::vector<T> data) : grid_(grid), data_(std::move(data)) {
    if (data_.size() != grid_.voxel_count())
      throw ShapeError("grid data length " + std::to_string(data_.size()) +
                       " does not match dims " + grid_.dims_string());
  }

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t x, std::size_t y, std::size_t z) { return data_[grid_.index(x, y, z)]; }
  const T& operator()(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[grid_.index(x, y, z)];
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  GridSpec grid_;
  std::vector<T> data_;
};

using Volume = Grid<float>;
using LabelVolume = Grid<std::uint32_t>;
using MaskVolume = Grid<std::uint8_t>;

/// Throws ShapeError naming both dims when the grids differ.
void require_same_grid(const GridSpec& a, const GridSpec& b, const std::string& what);

/// Offsets (dx, dy, dz) of the 26-neighborhood, in z-major, then y, then x order.
const std::array<std::array<int, 3>, 26>& neighbor_offsets_26();

/// Linear-index deltas of the 26 neighbors, valid for interior voxels.
std::array<std::ptrdiff_t, 26> neighbor_index_deltas_26(const GridSpec& grid);

// ---- interchange format: <stem>.json + <stem>.raw ----

void write_volume(const Volume& v, const std::string& stem);
void write_volume(const LabelVolume& v, const std::string& stem);
void write_volume(const MaskVolume& v, const std::string& stem);

using AnyVolume = std::variant<Volume, LabelVolume, MaskVolume>;

AnyVolume read_volume(const std::string& stem);
Volume read_f32_volume(const std::string& stem);
LabelVolume read_label_volume(const std::string& stem);

/// Paths of the two files behind a stem.
std::pair<std::string, std::string> volume_paths(const std::string& stem);

}  // namespace fiberseg
