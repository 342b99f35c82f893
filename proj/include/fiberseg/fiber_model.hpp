#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fiberseg/geometry.hpp"

namespace fiberseg {

/// A straight, flat-ended cylinder. Coordinates in micrometers.
struct Fiber {
  std::uint32_t id = 0;
  Vec3 p0;
  Vec3 p1;
  double radius = 0.0;

  double length() const { return norm(p1 - p0); }
  /// Flat-ended cylinder volume pi r^2 L.
  double volume() const;
};

/// Glass and epoxy densities in g/cc.
inline constexpr double kFiberDensity = 2.54;
inline constexpr double kMatrixDensity = 1.31;

struct ModelParams {
  double box_edge = 2000.0;
  double radius = 6.5;
  double mean_length = 500.0;
  double length_stddev = 100.0;
  double target_fraction = 0.054;
  std::uint64_t max_attempts = 150000;
  std::uint64_t seed = 1;

  /// Throws ParameterError on an invalid combination.
  void validate() const;
};

struct FiberModel {
  ModelParams params;
  std::vector<Fiber> fibers;
  std::uint64_t attempts_used = 0;
  /// Volume fraction after each acceptance, in acceptance order.
  std::vector<double> fraction_history;

  double fiber_volume() const;
  double volume_fraction() const;
};

/// True iff the two capsules (segments inflated by their radii) intersect,
/// i.e. the segment-segment distance is strictly below ra + rb.
bool capsules_overlap(const Fiber& a, const Fiber& b);

/// True iff both end spheres lie inside [0, box_edge]^3.
bool fiber_inside_box(const Fiber& f, double box_edge);

/// Random sequential placement of non-overlapping fibers; see ModelParams.
/// Sequential and deterministic in the seed.
FiberModel generate_model(const ModelParams& params);

/// Brute-force O(n^2) audit. Returns the number of overlapping pairs plus the
/// number of fibers leaving the box.
std::size_t audit_model(const FiberModel& m);

double weight_fraction(double volume_fraction, double fiber_density = kFiberDensity,
                       double matrix_density = kMatrixDensity);

struct Histogram {
  double lo = 0.0;
  double bin_width = 1.0;
  std::vector<std::uint64_t> counts;
};

struct ModelStats {
  std::size_t fiber_count = 0;
  double min_length = 0.0;
  double max_length = 0.0;
  double mean_length = 0.0;
  double box_volume = 0.0;
  double fiber_volume = 0.0;
  double volume_fraction = 0.0;
  double weight_fraction = 0.0;
  Histogram length_hist;
  Histogram theta_hist;  ///< 18 bins of 5 degrees on [0, 90]
  Histogram phi_hist;    ///< 36 bins of 10 degrees on [0, 360)
};

/// Elevation (theta, degrees, [0, 90]) and azimuth (phi, degrees, [0, 360)) of
/// an unoriented axis, canonicalized to z >= 0.
struct AxisAngles {
  double theta_deg;
  double phi_deg;
};
AxisAngles axis_angles(const Vec3& direction);

/// Length/theta/phi histograms in the fixed toolkit layout.
ModelStats describe_fibers(const std::vector<double>& lengths, const std::vector<Vec3>& axes);

ModelStats model_statistics(const FiberModel& m);

std::string stats_to_json(const ModelStats& s);

/// Binary STL: each fiber is a closed cylinder of 4 * segments triangles.
std::string export_stl(const FiberModel& m, int segments_per_circle = 24);

/// CSV with header id,x0,y0,z0,x1,y1,z1,radius_um; 6 decimals.
void write_fibers_csv(const std::vector<Fiber>& fibers, std::ostream& out);
std::vector<Fiber> read_fibers_csv(std::istream& in);

}  // namespace fiberseg
