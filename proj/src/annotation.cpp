#include "fiberseg/annotation.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

#include "json.hpp"

namespace fiberseg {

std::vector<Voxel> bresenham3d(const Voxel& p0, const Voxel& p1) {
  std::array<std::int64_t, 3> d{}, step{};
  for (int k = 0; k < 3; ++k) {
    d[k] = std::llabs(p1[k] - p0[k]);
    step[k] = p1[k] >= p0[k] ? 1 : -1;
  }
  // dominant axis drives the loop; the other two accumulate error
  const int major = d[0] >= d[1] && d[0] >= d[2] ? 0 : (d[1] >= d[2] ? 1 : 2);
  const int a = (major + 1) % 3, b = (major + 2) % 3;

  std::vector<Voxel> out;
  out.reserve(static_cast<std::size_t>(d[major] + 1));
  Voxel p = p0;
  out.push_back(p);
  std::int64_t err_a = 2 * d[a] - d[major];
  std::int64_t err_b = 2 * d[b] - d[major];
  for (std::int64_t i = 0; i < d[major]; ++i) {
    p[major] += step[major];
    if (err_a >= 0) {
      p[a] += step[a];
      err_a -= 2 * d[major];
    }
    if (err_b >= 0) {
      p[b] += step[b];
      err_b -= 2 * d[major];
    }
    err_a += 2 * d[a];
    err_b += 2 * d[b];
    out.push_back(p);
  }
  return out;
}

SeedRaster render_polylines(const std::vector<PolylineAnnotation>& annotations, const GridSpec& grid) {
  for (const auto& ann : annotations) {
    const std::string who = "annotation " + std::to_string(ann.id);
    if (ann.id == 0) throw ParameterError("annotation id must be positive");
    if (ann.points.size() < 2) throw ParameterError(who + ": needs at least 2 points");
    for (std::size_t i = 0; i < ann.points.size(); ++i) {
      const auto& q = ann.points[i];
      if (!grid.contains(q[0], q[1], q[2]))
        throw ParameterError(who + ": point " + std::to_string(i) + " (" + std::to_string(q[0]) + "," +
                             std::to_string(q[1]) + "," + std::to_string(q[2]) + ") is outside grid " +
                             grid.dims_string());
      if (i > 0 && q == ann.points[i - 1])
        throw ParameterError(who + ": point " + std::to_string(i) + " repeats its predecessor");
    }
  }

  SeedRaster out{LabelVolume(grid), 0};
  for (const auto& ann : annotations) {
    for (std::size_t i = 0; i + 1 < ann.points.size(); ++i) {
      for (const auto& q : bresenham3d(ann.points[i], ann.points[i + 1])) {
        auto& label = out.labels(static_cast<std::size_t>(q[0]), static_cast<std::size_t>(q[1]),
                                 static_cast<std::size_t>(q[2]));
        if (label == 0)
          label = ann.id;
        else if (label != ann.id)
          ++out.conflicts;
      }
    }
  }
  return out;
}

LabelVolume region_grow(const Volume& gray, const LabelVolume& seeds, double threshold) {
  require_same_grid(gray.grid(), seeds.grid(), "region_grow");
  const auto& g = gray.grid();
  LabelVolume out = seeds;
  const auto& offs = neighbor_offsets_26();
  const auto deltas = neighbor_index_deltas_26(g);

  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] != 0) front.push_back(i);

  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> proposal(out.size(), kNone);
  std::vector<std::size_t> next;
  const std::size_t nx = g.nx(), nxy = g.nx() * g.ny();

  while (!front.empty()) {
    next.clear();
    for (const std::size_t i : front) {
      const std::uint32_t label = out[i];
      const auto x = static_cast<std::ptrdiff_t>(i % nx);
      const auto y = static_cast<std::ptrdiff_t>((i / nx) % g.ny());
      const auto z = static_cast<std::ptrdiff_t>(i / nxy);
      const bool interior = x > 0 && y > 0 && z > 0 && x + 1 < static_cast<std::ptrdiff_t>(g.nx()) &&
                            y + 1 < static_cast<std::ptrdiff_t>(g.ny()) &&
                            z + 1 < static_cast<std::ptrdiff_t>(g.nz());
      for (std::size_t k = 0; k < offs.size(); ++k) {
        if (!interior && !g.contains(x + offs[k][0], y + offs[k][1], z + offs[k][2])) continue;
        const auto n = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + deltas[k]);
        if (out[n] != 0 || gray[n] < threshold) continue;
        if (proposal[n] == kNone) next.push_back(n);
        proposal[n] = std::min(proposal[n], label);
      }
    }
    for (const std::size_t n : next) {
      out[n] = proposal[n];
      proposal[n] = kNone;
    }
    front.swap(next);
  }
  return out;
}

std::vector<PolylineAnnotation> parse_annotations_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("annotation JSON: ") + e.what());
  }
  if (!j.is_array()) throw IoError("annotation JSON: top level must be an array");
  std::vector<PolylineAnnotation> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      PolylineAnnotation a;
      a.id = j[i].at("id").get<std::uint32_t>();
      for (const auto& p : j[i].at("points")) a.points.push_back(p.get<Voxel>());
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("annotation JSON entry " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::string annotations_to_json(const std::vector<PolylineAnnotation>& annotations) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& a : annotations) j.push_back({{"id", a.id}, {"points", a.points}});
  return j.dump();
}

}  // namespace fiberseg
