#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "fiberseg/fiber_model.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg {

/// Attenuation proxies; defaults reuse the glass/epoxy densities.
struct AttenuationLevels {
  double fiber_value = kFiberDensity;
  double matrix_value = kMatrixDensity;
};

struct DegradeParams {
  double psf_sigma_um = 0.0;
  /// mean(background) / noise stddev; infinity disables noise.
  double snr = std::numeric_limits<double>::infinity();
  std::uint64_t noise_seed = 0;
  AttenuationLevels levels;

  void validate() const;
};

struct LabelRaster {
  LabelVolume labels;
  /// Voxels claimed by more than one fiber (zero for a valid model).
  std::size_t conflicts = 0;
};

/// Voxel centers within `radius` of a fiber axis segment get that fiber's id;
/// the lower id wins if two fibers claim a voxel.
LabelRaster rasterize_labels(const std::vector<Fiber>& fibers, double box_edge, const GridSpec& grid);

/// matrix + (fiber - matrix) * occupancy, occupancy sampled on a
/// supersample^3 lattice inside each voxel.
Volume rasterize_attenuation(const std::vector<Fiber>& fibers, double box_edge, const GridSpec& grid,
                             int supersample = 3, AttenuationLevels levels = {});

/// Blur with sigma = psf_sigma_um / voxel_size (reflect boundary), then add
/// counter-based Gaussian noise with stddev = mean(blurred background) / snr.
/// Background = voxels whose input value is nearer matrix_value than
/// fiber_value; the whole volume is used if there are none.
Volume degrade(const Volume& v, const DegradeParams& p);

/// Standard normal deviate for (seed, counter); schedule independent.
double counter_normal(std::uint64_t seed, std::uint64_t counter);

/// Projections of one z-slice; row-major [angle][detector].
struct Sinogram {
  std::size_t n_angles = 0;
  std::size_t n_detectors = 0;
  std::vector<double> values;

  double& at(std::size_t a, std::size_t d) { return values[a * n_detectors + d]; }
  double at(std::size_t a, std::size_t d) const { return values[a * n_detectors + d]; }
};

/// Detector count for an nx-by-ny slice: covers the slice diagonal.
std::size_t detector_count(std::size_t nx, std::size_t ny);

/// Parallel-beam forward projection of slice z; angles k*pi/n_angles.
/// Pixel-driven: each pixel is spread over the detector by its exact projected
/// footprint (a trapezoid), which conserves mass at every angle.
Sinogram forward_project(const Volume& v, std::size_t z, std::size_t n_angles);

/// Ram-Lak filter (band-limited spatial ramp kernel applied in the frequency
/// domain on zero-padded projections).
void ramp_filter(Sinogram& s);

/// Linear-interpolated backprojection scaled by pi / n_angles.
std::vector<double> backproject(const Sinogram& filtered, std::size_t nx, std::size_t ny);

/// Per-slice forward projection, ramp filtering and backprojection.
Volume simulate_fbp(const Volume& v, std::size_t n_angles, std::vector<Sinogram>* sinograms = nullptr);

}  // namespace fiberseg
