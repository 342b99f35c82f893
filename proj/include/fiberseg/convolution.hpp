#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fiberseg/volume.hpp"

namespace fiberseg {

enum class Axis { x = 0, y = 1, z = 2 };

/// Odd-length sampled kernel; taps[k + radius] is the weight at offset k.
struct Kernel1D {
  int radius = 0;
  std::vector<double> taps;

  double at(int k) const { return taps[static_cast<std::size_t>(k + radius)]; }
};

/// Sampled Gaussian truncated at ceil(4 sigma), normalized to unit sum.
Kernel1D gaussian_kernel(double sigma);

/// Sampled Gaussian derivative of order 1 or 2, truncated at ceil(4 sigma).
/// Order 1 is scaled so that it differentiates a linear ramp exactly; order 2
/// is mean-subtracted (sums to 0) and scaled so it maps x^2 to exactly 2.
Kernel1D gaussian_derivative_kernel(double sigma, int order);

/// Half-sample symmetric reflection (… c b a | a b c … ) of i into [0, n).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

using Dims = std::array<std::size_t, 3>;

/// out[i] = sum_k h[k] * in[i - k] along one axis, reflect boundary.
/// Parallel over lines (OpenMP); each output is a fixed-order sum, so results
/// do not depend on the thread count.
template <class In, class Out>
void convolve_axis(std::span<const In> in, std::span<Out> out, const Dims& dims, Axis axis,
                   const Kernel1D& kernel);

/// Separable 3D Gaussian blur with sigma in voxels. sigma == 0 is the identity.
Volume gaussian_blur(const Volume& v, double sigma_voxels);

namespace reference {

/// Serial per-voxel convolution; same arithmetic order as convolve_axis.
template <class In, class Out>
void convolve_axis(std::span<const In> in, std::span<Out> out, const Dims& dims, Axis axis,
                   const Kernel1D& kernel);

Volume gaussian_blur(const Volume& v, double sigma_voxels);

}  // namespace reference

}  // namespace fiberseg
