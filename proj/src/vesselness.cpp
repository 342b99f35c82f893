#include "fiberseg/vesselness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "fiberseg/convolution.hpp"

namespace fiberseg {

void VesselnessParams::validate() const {
  if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
  if (!(beta > 0.0)) throw ParameterError("beta must be > 0");
  if (!c_auto && !(c > 0.0)) throw ParameterError("c must be > 0 when c_auto is off");
}

void ScaleSet::validate() const {
  if (sigmas.empty()) throw ParameterError("scale set must not be empty");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) throw ParameterError("scales must be positive");
    if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw ParameterError("scales must be strictly ascending");
  }
}

ScaleSet default_scales(double fiber_radius_um, double voxel_size_um) {
  const double r = fiber_radius_um / voxel_size_um;
  // round to 1/100 voxel so the physical default reads {1.0, 1.5, 2.0}
  auto round2 = [](double s) { return std::round(s * 100.0) / 100.0; };
  return {{round2(0.6 * r), round2(0.9 * r), round2(1.2 * r)}};
}

std::array<double, 3> symmetric_eigenvalues(double a00, double a11, double a22, double a01, double a02,
                                            double a12) {
  const double off = a01 * a01 + a02 * a02 + a12 * a12;
  const double q = (a00 + a11 + a22) / 3.0;
  const double d0 = a00 - q, d1 = a11 - q, d2 = a22 - q;
  const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * off;
  if (p2 <= 0.0) return {q, q, q};
  if (off == 0.0) {
    std::array<double, 3> e{a00, a11, a22};
    std::sort(e.begin(), e.end(), std::greater<>());
    return e;
  }
  const double p = std::sqrt(p2 / 6.0);
  const double b00 = d0 / p, b11 = d1 / p, b22 = d2 / p;
  const double b01 = a01 / p, b02 = a02 / p, b12 = a12 / p;
  const double det = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) + b02 * (b01 * b12 - b11 * b02);
  const double r = std::clamp(0.5 * det, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double e2 = 3.0 * q - e1 - e3;
  return {e1, e2, e3};
}

std::array<double, 3> order_by_magnitude(std::array<double, 3> l) {
  std::sort(l.begin(), l.end(), [](double a, double b) {
    const double fa = std::abs(a), fb = std::abs(b);
    return fa != fb ? fa < fb : a < b;
  });
  return l;
}

std::array<double, 3> symmetric_eigenvector(double a00, double a11, double a22, double a01, double a02,
                                            double a12, double eigenvalue) {
  using V = std::array<double, 3>;
  const V r0{a00 - eigenvalue, a01, a02};
  const V r1{a01, a11 - eigenvalue, a12};
  const V r2{a02, a12, a22 - eigenvalue};
  auto cr = [](const V& a, const V& b) -> V {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  };
  auto n2 = [](const V& a) { return a[0] * a[0] + a[1] * a[1] + a[2] * a[2]; };
  const V c01 = cr(r0, r1), c02 = cr(r0, r2), c12 = cr(r1, r2);
  const double n01 = n2(c01), n02 = n2(c02), n12 = n2(c12);
  const double best = std::max({n01, n02, n12});
  const double scale = std::max({n2(r0), n2(r1), n2(r2)});
  if (best > 1e-24 * scale * scale && best > 0.0) {
    const V& c = best == n01 ? c01 : (best == n02 ? c02 : c12);
    const double inv = 1.0 / std::sqrt(best);
    return {c[0] * inv, c[1] * inv, c[2] * inv};
  }
  // eigenvalue of multiplicity >= 2: any unit vector orthogonal to the
  // row space of (A - lambda I) will do
  const V* rows[3] = {&r0, &r1, &r2};
  const V* longest = rows[0];
  for (const V* r : rows)
    if (n2(*r) > n2(*longest)) longest = r;
  if (n2(*longest) == 0.0) return {0.0, 0.0, 1.0};
  const V& w = *longest;
  const V helper = std::abs(w[0]) < 0.9 * std::sqrt(n2(w)) ? V{1, 0, 0} : V{0, 1, 0};
  V u = cr(w, helper);
  const double inv = 1.0 / std::sqrt(n2(u));
  return {u[0] * inv, u[1] * inv, u[2] * inv};
}

namespace {

template <bool Parallel>
void pass(const std::vector<double>& in, std::vector<double>& out, const Dims& dims, Axis axis, const Kernel1D& k) {
  out.resize(in.size());
  if constexpr (Parallel)
    convolve_axis(std::span<const double>(in), std::span<double>(out), dims, axis, k);
  else
    reference::convolve_axis(std::span<const double>(in), std::span<double>(out), dims, axis, k);
}

template <bool Parallel>
HessianField hessian_impl(const Volume& v, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("hessian sigma must be > 0");
  const Dims dims = v.grid().dims();
  const auto g = gaussian_kernel(sigma);
  const auto d1 = gaussian_derivative_kernel(sigma, 1);
  const auto d2 = gaussian_derivative_kernel(sigma, 2);
  const std::vector<double> src(v.data().begin(), v.data().end());

  HessianField h{v.grid(), {}, {}, {}, {}, {}, {}};
  std::vector<double> a, b;
  {
    // smoothing along x, then the three y-variants
    std::vector<double> gx;
    pass<Parallel>(src, gx, dims, Axis::x, g);
    pass<Parallel>(gx, a, dims, Axis::y, g);
    pass<Parallel>(a, h.zz, dims, Axis::z, d2);
    pass<Parallel>(gx, a, dims, Axis::y, d1);
    pass<Parallel>(a, h.yz, dims, Axis::z, d1);
    pass<Parallel>(gx, a, dims, Axis::y, d2);
    pass<Parallel>(a, h.yy, dims, Axis::z, g);
  }
  {
    std::vector<double> dx;
    pass<Parallel>(src, dx, dims, Axis::x, d1);
    pass<Parallel>(dx, a, dims, Axis::y, g);
    pass<Parallel>(a, h.xz, dims, Axis::z, d1);
    pass<Parallel>(dx, a, dims, Axis::y, d1);
    pass<Parallel>(a, h.xy, dims, Axis::z, g);
  }
  {
    std::vector<double> dxx;
    pass<Parallel>(src, dxx, dims, Axis::x, d2);
    pass<Parallel>(dxx, a, dims, Axis::y, g);
    pass<Parallel>(a, h.xx, dims, Axis::z, g);
  }
  const double norm = sigma * sigma;
  for (auto* comp : {&h.xx, &h.yy, &h.zz, &h.xy, &h.xz, &h.yz})
    for (auto& value : *comp) value *= norm;
  return h;
}

std::array<float, 3> voxel_eigen(const HessianField& h, std::size_t i) {
  const auto e = order_by_magnitude(symmetric_eigenvalues(h.xx[i], h.yy[i], h.zz[i], h.xy[i], h.xz[i], h.yz[i]));
  std::array<float, 3> f{static_cast<float>(e[0]), static_cast<float>(e[1]), static_cast<float>(e[2])};
  // keep the ordering after rounding to float
  std::sort(f.begin(), f.end(), [](float a, float b) {
    const float fa = std::abs(a), fb = std::abs(b);
    return fa != fb ? fa < fb : a < b;
  });
  return f;
}

}  // namespace

HessianField hessian_components(const Volume& v, double sigma) { return hessian_impl<true>(v, sigma); }

EigenField hessian_at_scale(const Volume& v, double sigma) {
  const HessianField h = hessian_impl<true>(v, sigma);
  EigenField e{v.grid(), std::vector<std::array<float, 3>>(v.size())};
  const auto n = static_cast<std::ptrdiff_t>(v.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    e.values[static_cast<std::size_t>(i)] = voxel_eigen(h, static_cast<std::size_t>(i));
  return e;
}

double frangi_voxel(double l1, double l2, double l3, double alpha, double beta, double c) {
  if (l2 > 0.0 || l3 > 0.0) return 0.0;
  if (l3 == 0.0 || l2 == 0.0) return 0.0;
  const double ra = std::abs(l2) / std::abs(l3);
  const double rb = std::abs(l1) / std::sqrt(std::abs(l2 * l3));
  const double s2 = l1 * l1 + l2 * l2 + l3 * l3;
  const double v = (1.0 - std::exp(-ra * ra / (2.0 * alpha * alpha))) * std::exp(-rb * rb / (2.0 * beta * beta)) *
                   (1.0 - std::exp(-s2 / (2.0 * c * c)));
  return std::clamp(v, 0.0, 1.0);
}

namespace {

double auto_c(const EigenField& e) {
  double max_s2 = 0.0;
  for (const auto& l : e.values) {
    const double s2 = double(l[0]) * l[0] + double(l[1]) * l[1] + double(l[2]) * l[2];
    max_s2 = std::max(max_s2, s2);
  }
  return 0.5 * std::sqrt(max_s2);
}

template <bool Parallel>
Volume frangi_impl(const EigenField& e, const VesselnessParams& p) {
  p.validate();
  double c = p.c_auto ? auto_c(e) : p.c;
  Volume out(e.grid);
  if (!(c > 0.0)) return out;  // c_auto on an all-zero field
  const auto n = static_cast<std::ptrdiff_t>(e.values.size());
#pragma omp parallel for schedule(static) if (Parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& l = e.values[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = static_cast<float>(frangi_voxel(l[0], l[1], l[2], p.alpha, p.beta, c));
  }
  return out;
}

}  // namespace

Volume frangi_response(const EigenField& e, const VesselnessParams& p) { return frangi_impl<true>(e, p); }

Volume frangi_multiscale(const Volume& v, const ScaleSet& scales, const VesselnessParams& p, Polarity polarity) {
  scales.validate();
  p.validate();
  Volume input = v;
  if (polarity == Polarity::dark_on_bright)
    for (auto& x : input.values()) x = -x;
  Volume best(v.grid(), 0.0f);
  for (const double sigma : scales.sigmas) {
    const Volume r = frangi_response(hessian_at_scale(input, sigma), p);
    for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::max(best[i], r[i]);
  }
  return best;
}

double otsu_threshold(const Volume& v) {
  if (v.size() == 0) throw ParameterError("otsu: empty volume");
  const auto [mn_it, mx_it] = std::minmax_element(v.data().begin(), v.data().end());
  const double lo = *mn_it, hi = *mx_it;
  if (!(hi > lo)) throw ParameterError("otsu: degenerate histogram");
  constexpr int kBins = 256;
  const double width = (hi - lo) / kBins;
  std::array<double, kBins> hist{};
  for (const float x : v.data()) {
    const int b = std::min(kBins - 1, static_cast<int>((x - lo) / width));
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  const double total = static_cast<double>(v.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_t = 1;
  for (int t = 1; t < kBins; ++t) {
    w0 += hist[static_cast<std::size_t>(t - 1)];
    sum0 += (t - 1) * hist[static_cast<std::size_t>(t - 1)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return lo + best_t * width;
}

Binarized binarize(const Volume& v, BinarizeMethod method) {
  double t = method.threshold;
  if (method.kind == BinarizeMethod::Kind::otsu)
    t = otsu_threshold(v);
  else if (!std::isfinite(t))
    throw ParameterError("binarize: threshold must be finite");
  Binarized out{LabelVolume(v.grid()), t};
  for (std::size_t i = 0; i < v.size(); ++i) out.mask[i] = v[i] >= t ? 1u : 0u;
  return out;
}

Components connected_components(const LabelVolume& binary) {
  const auto& g = binary.grid();
  for (const auto x : binary.data())
    if (x > 1) throw ParameterError("connected_components: input is not binary");
  Components out{LabelVolume(g), 0};
  const auto& offs = neighbor_offsets_26();
  const std::size_t nx = g.nx(), ny = g.ny();
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < binary.size(); ++seed) {
    if (binary[seed] == 0 || out.labels[seed] != 0) continue;
    const std::uint32_t label = ++out.count;
    out.labels[seed] = label;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      const auto x = static_cast<std::ptrdiff_t>(i % nx);
      const auto y = static_cast<std::ptrdiff_t>((i / nx) % ny);
      const auto z = static_cast<std::ptrdiff_t>(i / (nx * ny));
      for (const auto& o : offs) {
        if (!g.contains(x + o[0], y + o[1], z + o[2])) continue;
        const std::size_t n = g.index(static_cast<std::size_t>(x + o[0]), static_cast<std::size_t>(y + o[1]),
                                      static_cast<std::size_t>(z + o[2]));
        if (binary[n] == 0 || out.labels[n] != 0) continue;
        out.labels[n] = label;
        queue.push_back(n);
      }
    }
  }
  return out;
}

OrientationField structure_tensor_orientation(const Volume& v, double sigma_g, double rho) {
  if (!(sigma_g > 0.0)) throw ParameterError("structure tensor: sigma_g must be > 0");
  if (!(rho >= 0.0)) throw ParameterError("structure tensor: rho must be >= 0");
  const Dims dims = v.grid().dims();
  const auto g = gaussian_kernel(sigma_g);
  const auto d1 = gaussian_derivative_kernel(sigma_g, 1);
  const std::vector<double> src(v.data().begin(), v.data().end());

  auto separable = [&](const std::vector<double>& in, const Kernel1D& kx, const Kernel1D& ky, const Kernel1D& kz) {
    std::vector<double> a, b;
    pass<true>(in, a, dims, Axis::x, kx);
    pass<true>(a, b, dims, Axis::y, ky);
    pass<true>(b, a, dims, Axis::z, kz);
    return a;
  };
  const auto gx = separable(src, d1, g, g);
  const auto gy = separable(src, g, d1, g);
  const auto gz = separable(src, g, g, d1);

  const std::size_t n = v.size();
  std::array<std::vector<double>, 6> t;  // xx yy zz xy xz yz
  for (auto& c : t) c.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[0][i] = gx[i] * gx[i];
    t[1][i] = gy[i] * gy[i];
    t[2][i] = gz[i] * gz[i];
    t[3][i] = gx[i] * gy[i];
    t[4][i] = gx[i] * gz[i];
    t[5][i] = gy[i] * gz[i];
  }
  if (rho > 0.0) {
    const auto smooth = gaussian_kernel(rho);
    for (auto& c : t) c = separable(c, smooth, smooth, smooth);
  }

  double max_trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_trace = std::max(max_trace, t[0][i] + t[1][i] + t[2][i]);
  // Gradients of a flat signal are round-off, not structure: also require the
  // gradient energy to exceed a floor tied to the intensity scale.
  double max_abs = 0.0;
  for (const float x : v.data()) max_abs = std::max(max_abs, static_cast<double>(std::abs(x)));
  const double floor = std::max(1e-12 * max_trace, 1e-20 * max_abs * max_abs);

  OrientationField o{Volume(v.grid()), Volume(v.grid()), Volume(v.grid()), MaskVolume(v.grid())};
  const auto sn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < sn; ++si) {
    const auto i = static_cast<std::size_t>(si);
    const double trace = t[0][i] + t[1][i] + t[2][i];
    if (!(trace > floor)) continue;
    const auto ev = symmetric_eigenvalues(t[0][i], t[1][i], t[2][i], t[3][i], t[4][i], t[5][i]);
    auto axis = symmetric_eigenvector(t[0][i], t[1][i], t[2][i], t[3][i], t[4][i], t[5][i], ev[2]);
    if (axis[2] < 0.0 || (axis[2] == 0.0 && (axis[1] < 0.0 || (axis[1] == 0.0 && axis[0] < 0.0))))
      for (auto& c : axis) c = -c;
    o.ox[i] = static_cast<float>(axis[0]);
    o.oy[i] = static_cast<float>(axis[1]);
    o.oz[i] = static_cast<float>(axis[2]);
    o.valid[i] = 1;
  }
  return o;
}

void write_orientation(const OrientationField& o, const std::string& stem) {
  write_volume(o.ox, stem + ".ox");
  write_volume(o.oy, stem + ".oy");
  write_volume(o.oz, stem + ".oz");
  write_volume(o.valid, stem + ".valid");
}

namespace reference {

EigenField hessian_at_scale(const Volume& v, double sigma) {
  const HessianField h = hessian_impl<false>(v, sigma);
  EigenField e{v.grid(), std::vector<std::array<float, 3>>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) e.values[i] = voxel_eigen(h, i);
  return e;
}

Volume frangi_multiscale(const Volume& v, const ScaleSet& scales, const VesselnessParams& p) {
  scales.validate();
  Volume best(v.grid(), 0.0f);
  for (const double sigma : scales.sigmas) {
    const Volume r = frangi_impl<false>(reference::hessian_at_scale(v, sigma), p);
    for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::max(best[i], r[i]);
  }
  return best;
}

}  // namespace reference

}  // namespace fiberseg
