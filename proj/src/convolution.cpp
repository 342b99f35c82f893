#include "fiberseg/convolution.hpp"

#include <cmath>
#include <numeric>

namespace fiberseg {

namespace {

int kernel_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(4.0 * sigma))); }

std::vector<double> sampled_gaussian(double sigma, int radius) {
  std::vector<double> g(static_cast<std::size_t>(2 * radius + 1));
  for (int k = -radius; k <= radius; ++k)
    g[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
  const double sum = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& w : g) w /= sum;
  return g;
}

struct LineLayout {
  std::size_t length;
  std::size_t stride;
  std::size_t count;
};

LineLayout line_layout(const Dims& dims, Axis axis) {
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  switch (axis) {
    case Axis::x: return {nx, 1, ny * nz};
    case Axis::y: return {ny, nx, nx * nz};
    case Axis::z: return {nz, nx * ny, nx * ny};
  }
  return {0, 0, 0};
}

// Linear index of the first element of line `line` for the given axis.
std::size_t line_start(const Dims& dims, Axis axis, std::size_t line) {
  const std::size_t nx = dims[0], ny = dims[1];
  switch (axis) {
    case Axis::x: return line * nx;
    case Axis::y: return (line % nx) + (line / nx) * nx * ny;
    case Axis::z: return line;
  }
  return 0;
}

}  // namespace

Kernel1D gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be > 0");
  const int r = kernel_radius(sigma);
  return {r, sampled_gaussian(sigma, r)};
}

Kernel1D gaussian_derivative_kernel(double sigma, int order) {
  if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be > 0");
  if (order != 1 && order != 2) throw ParameterError("derivative order must be 1 or 2");
  const int r = kernel_radius(sigma);
  const auto g = sampled_gaussian(sigma, r);
  const double s2 = sigma * sigma;
  std::vector<double> h(g.size());
  for (int k = -r; k <= r; ++k) {
    const auto i = static_cast<std::size_t>(k + r);
    h[i] = order == 1 ? -k / s2 * g[i] : (k * k / (s2 * s2) - 1.0 / s2) * g[i];
  }
  if (order == 1) {
    // sum_k h[k] * (i - k) must equal 1 for a unit ramp
    double moment = 0.0;
    for (int k = -r; k <= r; ++k) moment -= k * h[static_cast<std::size_t>(k + r)];
    for (auto& w : h) w /= moment;
  } else {
    const double mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(h.size());
    for (auto& w : h) w -= mean;
    double moment = 0.0;
    for (int k = -r; k <= r; ++k) moment += static_cast<double>(k) * k * h[static_cast<std::size_t>(k + r)];
    for (auto& w : h) w *= 2.0 / moment;
  }
  return {r, std::move(h)};
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

template <class In, class Out>
void convolve_axis(std::span<const In> in, std::span<Out> out, const Dims& dims, Axis axis,
                   const Kernel1D& kernel) {
  if (in.size() != dims[0] * dims[1] * dims[2] || out.size() != in.size())
    throw ShapeError("convolve_axis: buffer size does not match dims");
  const auto layout = line_layout(dims, axis);
  const int r = kernel.radius;
  const auto n = static_cast<std::ptrdiff_t>(layout.length);
  const auto lines = static_cast<std::ptrdiff_t>(layout.count);

#pragma omp parallel
  {
    std::vector<double> buf(static_cast<std::size_t>(n + 2 * r));
#pragma omp for schedule(static)
    for (std::ptrdiff_t line = 0; line < lines; ++line) {
      const std::size_t base = line_start(dims, axis, static_cast<std::size_t>(line));
      for (std::ptrdiff_t j = -r; j < n + r; ++j)
        buf[static_cast<std::size_t>(j + r)] =
            static_cast<double>(in[base + reflect_index(j, layout.length) * layout.stride]);
      for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k)
          acc += kernel.taps[static_cast<std::size_t>(k + r)] * buf[static_cast<std::size_t>(i - k + r)];
        out[base + static_cast<std::size_t>(i) * layout.stride] = static_cast<Out>(acc);
      }
    }
  }
}

template void convolve_axis<float, float>(std::span<const float>, std::span<float>, const Dims&, Axis,
                                          const Kernel1D&);
template void convolve_axis<float, double>(std::span<const float>, std::span<double>, const Dims&, Axis,
                                           const Kernel1D&);
template void convolve_axis<double, double>(std::span<const double>, std::span<double>, const Dims&, Axis,
                                            const Kernel1D&);
template void convolve_axis<double, float>(std::span<const double>, std::span<float>, const Dims&, Axis,
                                           const Kernel1D&);

namespace {

template <class Convolve>
Volume blur_with(const Volume& v, double sigma_voxels, Convolve&& conv) {
  if (sigma_voxels < 0.0 || !std::isfinite(sigma_voxels)) throw ParameterError("blur sigma must be >= 0");
  if (sigma_voxels == 0.0) return v;
  const auto k = gaussian_kernel(sigma_voxels);
  const Dims dims = v.grid().dims();
  std::vector<double> a(v.size()), b(v.size());
  conv(std::span<const float>(v.data()), std::span<double>(a), dims, Axis::x, k);
  conv(std::span<const double>(a), std::span<double>(b), dims, Axis::y, k);
  Volume out(v.grid());
  conv(std::span<const double>(b), out.data(), dims, Axis::z, k);
  return out;
}

}  // namespace

Volume gaussian_blur(const Volume& v, double sigma_voxels) {
  return blur_with(v, sigma_voxels, [](auto in, auto out, const Dims& d, Axis ax, const Kernel1D& k) {
    convolve_axis(in, out, d, ax, k);
  });
}

namespace reference {

template <class In, class Out>
void convolve_axis(std::span<const In> in, std::span<Out> out, const Dims& dims, Axis axis,
                   const Kernel1D& kernel) {
  if (in.size() != dims[0] * dims[1] * dims[2] || out.size() != in.size())
    throw ShapeError("convolve_axis: buffer size does not match dims");
  const std::size_t a = static_cast<std::size_t>(axis);
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const std::array<std::size_t, 3> p{x, y, z};
        double acc = 0.0;
        for (int k = -kernel.radius; k <= kernel.radius; ++k) {
          auto q = p;
          q[a] = reflect_index(static_cast<std::ptrdiff_t>(p[a]) - k, dims[a]);
          acc += kernel.at(k) * static_cast<double>(in[q[0] + nx * (q[1] + ny * q[2])]);
        }
        out[x + nx * (y + ny * z)] = static_cast<Out>(acc);
      }
}

template void convolve_axis<float, float>(std::span<const float>, std::span<float>, const Dims&, Axis,
                                          const Kernel1D&);
template void convolve_axis<float, double>(std::span<const float>, std::span<double>, const Dims&, Axis,
                                           const Kernel1D&);
template void convolve_axis<double, double>(std::span<const double>, std::span<double>, const Dims&, Axis,
                                            const Kernel1D&);
template void convolve_axis<double, float>(std::span<const double>, std::span<float>, const Dims&, Axis,
                                           const Kernel1D&);

Volume gaussian_blur(const Volume& v, double sigma_voxels) {
  return blur_with(v, sigma_voxels, [](auto in, auto out, const Dims& d, Axis ax, const Kernel1D& k) {
    reference::convolve_axis(in, out, d, ax, k);
  });
}

}  // namespace reference

}  // namespace fiberseg
