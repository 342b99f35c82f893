#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fiberseg/volume.hpp"

namespace fiberseg {

using Voxel = std::array<std::int64_t, 3>;

/// One hand-traced fiber: an ordered chain of voxel coordinates.
struct PolylineAnnotation {
  std::uint32_t id = 0;
  std::vector<Voxel> points;
};

/// Integer 3D Bresenham line from p0 to p1, both endpoints included.
std::vector<Voxel> bresenham3d(const Voxel& p0, const Voxel& p1);

struct SeedRaster {
  LabelVolume labels;
  std::size_t conflicts = 0;
};

/// Draws each chain with its id; a voxel keeps the first id written to it.
SeedRaster render_polylines(const std::vector<PolylineAnnotation>& annotations, const GridSpec& grid);

/// Round-synchronous multi-source growth over 26-neighbors with
/// gray >= threshold; contested voxels go to the smallest label.
LabelVolume region_grow(const Volume& gray, const LabelVolume& seeds, double threshold);

/// `[{"id": k, "points": [[x,y,z], ...]}, ...]`
std::vector<PolylineAnnotation> parse_annotations_json(const std::string& text);
std::string annotations_to_json(const std::vector<PolylineAnnotation>& annotations);

}  // namespace fiberseg
