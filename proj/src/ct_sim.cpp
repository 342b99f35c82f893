#include "fiberseg/ct_sim.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>

#include "fiberseg/convolution.hpp"

namespace fiberseg {

void DegradeParams::validate() const {
  if (!(psf_sigma_um >= 0.0) || !std::isfinite(psf_sigma_um)) throw ParameterError("psf_sigma must be >= 0");
  if (!(snr > 0.0)) throw ParameterError("snr must be > 0 (or infinite)");
  if (!(levels.fiber_value > levels.matrix_value))
    throw ParameterError("fiber_value must exceed matrix_value");
}

namespace {

void require_grid_covers_box(const GridSpec& grid, double box_edge) {
  for (double e : grid.extent())
    if (e < box_edge * (1.0 - 1e-9))
      throw ParameterError("grid extent " + std::to_string(e) + " um is smaller than model box " +
                           std::to_string(box_edge) + " um");
}

struct VoxelRange {
  std::ptrdiff_t lo[3];
  std::ptrdiff_t hi[3];  // inclusive
};

// Voxels whose cell intersects the fiber's inflated bounding box.
VoxelRange fiber_voxel_range(const Fiber& f, const GridSpec& grid) {
  VoxelRange r{};
  const double vs = grid.voxel_size();
  const double a[3] = {f.p0.x, f.p0.y, f.p0.z};
  const double b[3] = {f.p1.x, f.p1.y, f.p1.z};
  for (int k = 0; k < 3; ++k) {
    const double lo = std::min(a[k], b[k]) - f.radius;
    const double hi = std::max(a[k], b[k]) + f.radius;
    const auto n = static_cast<std::ptrdiff_t>(grid.dims()[static_cast<std::size_t>(k)]);
    r.lo[k] = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(lo / vs)), 0, n - 1);
    r.hi[k] = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(hi / vs)), 0, n - 1);
  }
  return r;
}

// Fiber indices (ascending) touching each z-slice.
std::vector<std::vector<std::size_t>> bucket_by_slice(const std::vector<Fiber>& fibers, const GridSpec& grid,
                                                      std::vector<VoxelRange>& ranges) {
  std::vector<std::vector<std::size_t>> buckets(grid.nz());
  ranges.clear();
  ranges.reserve(fibers.size());
  for (std::size_t i = 0; i < fibers.size(); ++i) {
    ranges.push_back(fiber_voxel_range(fibers[i], grid));
    for (auto z = ranges.back().lo[2]; z <= ranges.back().hi[2]; ++z) buckets[static_cast<std::size_t>(z)].push_back(i);
  }
  return buckets;
}

bool inside_fiber(const Vec3& p, const Fiber& f) {
  return point_segment_distance_sq(p, f.p0, f.p1) <= f.radius * f.radius;
}

}  // namespace

LabelRaster rasterize_labels(const std::vector<Fiber>& fibers, double box_edge, const GridSpec& grid) {
  require_grid_covers_box(grid, box_edge);
  std::vector<std::size_t> order(fibers.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fibers[a].id < fibers[b].id; });
  std::vector<Fiber> sorted;
  sorted.reserve(fibers.size());
  for (auto i : order) sorted.push_back(fibers[i]);

  std::vector<VoxelRange> ranges;
  const auto buckets = bucket_by_slice(sorted, grid, ranges);
  LabelRaster out{LabelVolume(grid), 0};
  const double vs = grid.voxel_size();
  const auto nz = static_cast<std::ptrdiff_t>(grid.nz());
  std::size_t conflicts = 0;

#pragma omp parallel for schedule(dynamic) reduction(+ : conflicts)
  for (std::ptrdiff_t z = 0; z < nz; ++z) {
    for (const std::size_t fi : buckets[static_cast<std::size_t>(z)]) {
      const Fiber& f = sorted[fi];
      const auto& r = ranges[fi];
      for (auto y = r.lo[1]; y <= r.hi[1]; ++y)
        for (auto x = r.lo[0]; x <= r.hi[0]; ++x) {
          const Vec3 c{(x + 0.5) * vs, (y + 0.5) * vs, (z + 0.5) * vs};
          if (!inside_fiber(c, f)) continue;
          auto& label = out.labels(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
          if (label == 0)
            label = f.id;
          else if (label != f.id)
            ++conflicts;
        }
    }
  }
  out.conflicts = conflicts;
  return out;
}

Volume rasterize_attenuation(const std::vector<Fiber>& fibers, double box_edge, const GridSpec& grid,
                             int supersample, AttenuationLevels levels) {
  if (supersample < 1) throw ParameterError("supersample must be >= 1");
  require_grid_covers_box(grid, box_edge);
  std::vector<VoxelRange> ranges;
  const auto buckets = bucket_by_slice(fibers, grid, ranges);

  const auto s = static_cast<std::size_t>(supersample);
  const std::size_t nx = grid.nx(), ny = grid.ny();
  const std::size_t total = s * s * s;
  const double vs = grid.voxel_size();
  const double contrast = levels.fiber_value - levels.matrix_value;
  Volume out(grid, static_cast<float>(levels.matrix_value));
  const auto nz = static_cast<std::ptrdiff_t>(grid.nz());

#pragma omp parallel
  {
    // sub-sample occupancy of one slab: (nx*s) x (ny*s) x s
    std::vector<std::uint8_t> occ;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t z = 0; z < nz; ++z) {
      const auto& bucket = buckets[static_cast<std::size_t>(z)];
      if (bucket.empty()) continue;
      occ.assign(nx * s * ny * s * s, 0);
      auto occ_index = [&](std::size_t sx, std::size_t sy, std::size_t sz) { return sx + nx * s * (sy + ny * s * sz); };
      for (const std::size_t fi : bucket) {
        const Fiber& f = fibers[fi];
        const auto& r = ranges[fi];
        for (std::size_t c = 0; c < s; ++c) {
          const double pz = (static_cast<double>(z) + (c + 0.5) / static_cast<double>(s)) * vs;
          for (auto y = static_cast<std::size_t>(r.lo[1]); y <= static_cast<std::size_t>(r.hi[1]); ++y)
            for (std::size_t b = 0; b < s; ++b) {
              const double py = (static_cast<double>(y) + (b + 0.5) / static_cast<double>(s)) * vs;
              for (auto x = static_cast<std::size_t>(r.lo[0]); x <= static_cast<std::size_t>(r.hi[0]); ++x)
                for (std::size_t a = 0; a < s; ++a) {
                  auto& o = occ[occ_index(x * s + a, y * s + b, c)];
                  if (o) continue;
                  const double px = (static_cast<double>(x) + (a + 0.5) / static_cast<double>(s)) * vs;
                  if (inside_fiber({px, py, pz}, f)) o = 1;
                }
            }
        }
      }
      for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) {
          std::size_t count = 0;
          for (std::size_t c = 0; c < s; ++c)
            for (std::size_t b = 0; b < s; ++b)
              for (std::size_t a = 0; a < s; ++a) count += occ[occ_index(x * s + a, y * s + b, c)];
          float value;
          if (count == 0)
            value = static_cast<float>(levels.matrix_value);
          else if (count == total)
            value = static_cast<float>(levels.fiber_value);
          else
            value = static_cast<float>(levels.matrix_value +
                                       contrast * static_cast<double>(count) / static_cast<double>(total));
          out(x, y, static_cast<std::size_t>(z)) = value;
        }
    }
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

double counter_normal(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t key = splitmix64(seed);
  const std::uint64_t a = splitmix64(key ^ (2 * counter));
  const std::uint64_t b = splitmix64(key ^ (2 * counter + 1));
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;          // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Volume degrade(const Volume& v, const DegradeParams& p) {
  p.validate();
  Volume out = gaussian_blur(v, p.psf_sigma_um / v.grid().voxel_size());
  if (std::isinf(p.snr)) return out;

  const double mid = 0.5 * (p.levels.fiber_value + p.levels.matrix_value);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] <= mid) {
      sum += out[i];
      ++count;
    }
  if (count == 0) {
    for (std::size_t i = 0; i < out.size(); ++i) sum += out[i];
    count = out.size();
  }
  const double sigma = std::abs(sum / static_cast<double>(count)) / p.snr;
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = static_cast<float>(
        out[static_cast<std::size_t>(i)] + sigma * counter_normal(p.noise_seed, static_cast<std::uint64_t>(i)));
  return out;
}

std::size_t detector_count(std::size_t nx, std::size_t ny) {
  auto n = static_cast<std::size_t>(std::ceil(std::hypot(static_cast<double>(nx), static_cast<double>(ny)))) + 3;
  if (n % 2 == 0) ++n;
  return n;
}

namespace {

// Cumulative integral of a unit square pixel's projected footprint: the
// convolution of two boxes of widths a >= b, a trapezoid of unit area.
struct PixelFootprint {
  double a, b, w1, w2;
  PixelFootprint(double c, double s) {
    a = std::max(std::abs(c), std::abs(s));
    b = std::min(std::abs(c), std::abs(s));
    w1 = 0.5 * (a - b);
    w2 = 0.5 * (a + b);
  }
  double cdf(double u) const {
    if (u <= -w2) return 0.0;
    if (u >= w2) return 1.0;
    if (u > 0.0) return 1.0 - cdf(-u);
    if (u < -w1) return (u + w2) * (u + w2) / (2.0 * a * b);
    return (b > 0.0 ? 0.5 * b / a : 0.0) + (u + w1) / a;
  }
};

}  // namespace

Sinogram forward_project(const Volume& v, std::size_t z, std::size_t n_angles) {
  if (n_angles < 1) throw ParameterError("n_angles must be >= 1");
  const std::size_t nx = v.grid().nx(), ny = v.grid().ny();
  Sinogram s{n_angles, detector_count(nx, ny), {}};
  s.values.assign(s.n_angles * s.n_detectors, 0.0);
  const double cx = 0.5 * static_cast<double>(nx - 1), cy = 0.5 * static_cast<double>(ny - 1);
  const double cd = 0.5 * static_cast<double>(s.n_detectors - 1);
  for (std::size_t a = 0; a < n_angles; ++a) {
    const double theta = std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles);
    const double c = std::cos(theta), sn = std::sin(theta);
    const PixelFootprint fp(c, sn);
    double* row = &s.values[a * s.n_detectors];
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const double val = v(x, y, z);
        if (val == 0.0) continue;
        // detector bin i covers [i - 0.5, i + 0.5]
        const double t = (static_cast<double>(x) - cx) * c + (static_cast<double>(y) - cy) * sn + cd;
        const auto first = static_cast<std::size_t>(std::floor(t - fp.w2 + 0.5));
        const auto last = static_cast<std::size_t>(std::floor(t + fp.w2 + 0.5));
        double below = fp.cdf(static_cast<double>(first) - 0.5 - t);
        for (std::size_t i = first; i <= last; ++i) {
          const double upto = fp.cdf(static_cast<double>(i) + 0.5 - t);
          row[i] += val * (upto - below);
          below = upto;
        }
      }
  }
  return s;
}

namespace {

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

void ramp_filter(Sinogram& s) {
  const std::size_t n = next_pow2(2 * s.n_detectors);
  const std::size_t nc = n / 2 + 1;
  auto real = fftw_buffer<double>(n);
  auto spec = fftw_buffer<fftw_complex>(nc);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_plan_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), real.get(), spec.get(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec.get(), real.get(), FFTW_ESTIMATE);
  }

  // band-limited ramp: h[0] = 1/4, h[k odd] = -1/(pi k)^2, h[k even] = 0
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::ptrdiff_t>(i <= n / 2 ? i : n - i);
    real[i] = k == 0 ? 0.25 : (k % 2 ? -1.0 / (std::numbers::pi * std::numbers::pi * double(k) * double(k)) : 0.0);
  }
  fftw_execute(fwd);
  std::vector<double> response(nc);
  for (std::size_t i = 0; i < nc; ++i) response[i] = spec[i][0];

  for (std::size_t a = 0; a < s.n_angles; ++a) {
    std::fill(real.get(), real.get() + n, 0.0);
    std::copy_n(&s.values[a * s.n_detectors], s.n_detectors, real.get());
    fftw_execute(fwd);
    for (std::size_t i = 0; i < nc; ++i) {
      spec[i][0] *= response[i];
      spec[i][1] *= response[i];
    }
    fftw_execute(inv);
    for (std::size_t d = 0; d < s.n_detectors; ++d) s.at(a, d) = real[d] / static_cast<double>(n);
  }

  std::lock_guard lock(fftw_plan_mutex());
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
}

std::vector<double> backproject(const Sinogram& filtered, std::size_t nx, std::size_t ny) {
  std::vector<double> img(nx * ny, 0.0);
  const double cx = 0.5 * static_cast<double>(nx - 1), cy = 0.5 * static_cast<double>(ny - 1);
  const double cd = 0.5 * static_cast<double>(filtered.n_detectors - 1);
  const auto last = static_cast<double>(filtered.n_detectors - 1);
  for (std::size_t a = 0; a < filtered.n_angles; ++a) {
    const double theta = std::numbers::pi * static_cast<double>(a) / static_cast<double>(filtered.n_angles);
    const double c = std::cos(theta), sn = std::sin(theta);
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) {
        const double t = (static_cast<double>(x) - cx) * c + (static_cast<double>(y) - cy) * sn + cd;
        if (t < 0.0 || t > last) continue;
        const double fl = std::floor(t);
        const auto i0 = static_cast<std::size_t>(fl);
        const double w = t - fl;
        const double q0 = filtered.at(a, i0);
        const double q1 = i0 + 1 < filtered.n_detectors ? filtered.at(a, i0 + 1) : 0.0;
        img[x + nx * y] += (1.0 - w) * q0 + w * q1;
      }
  }
  const double scale = std::numbers::pi / static_cast<double>(filtered.n_angles);
  for (auto& p : img) p *= scale;
  return img;
}

Volume simulate_fbp(const Volume& v, std::size_t n_angles, std::vector<Sinogram>* sinograms) {
  if (n_angles < 1) throw ParameterError("n_angles must be >= 1");
  const auto& g = v.grid();
  Volume out(g);
  if (sinograms) sinograms->assign(g.nz(), Sinogram{});
  const auto nz = static_cast<std::ptrdiff_t>(g.nz());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t z = 0; z < nz; ++z) {
    const auto zs = static_cast<std::size_t>(z);
    Sinogram s = forward_project(v, zs, n_angles);
    if (sinograms) (*sinograms)[zs] = s;
    ramp_filter(s);
    const auto img = backproject(s, g.nx(), g.ny());
    for (std::size_t y = 0; y < g.ny(); ++y)
      for (std::size_t x = 0; x < g.nx(); ++x) out(x, y, zs) = static_cast<float>(img[x + g.nx() * y]);
  }
  return out;
}

}  // namespace fiberseg
