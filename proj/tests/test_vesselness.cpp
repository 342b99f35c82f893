#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fiberseg/convolution.hpp"
#include "fiberseg/vesselness.hpp"
#include "oracles.hpp"

using namespace fiberseg;

namespace {

template <class F>
Volume phantom(std::size_t n, F f) {
  Volume v(GridSpec(n, n, n, 1.0));
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) v(x, y, z) = static_cast<float>(f(double(x), double(y), double(z)));
  return v;
}

Volume random_volume(GridSpec g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Volume v(g);
  for (auto& x : v.values()) x = u(rng);
  return v;
}

// Bright cylinder of radius r voxels along z through (c, c), smooth edge.
Volume cylinder_z(std::size_t n, double r) {
  const double c = 0.5 * double(n - 1);
  return phantom(n, [&](double x, double y, double) {
    const double d = std::hypot(x - c, y - c);
    return 1.0 / (1.0 + std::exp((d - r) / 0.3));
  });
}

double angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double d = std::abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) /
                   (std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) * std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]));
  return std::acos(std::min(1.0, d)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("default scales follow the fiber radius") {
  const auto s = default_scales(6.5, 3.9);
  REQUIRE(s.sigmas.size() == 3);
  CHECK(s.sigmas[0] == doctest::Approx(1.0));
  CHECK(s.sigmas[1] == doctest::Approx(1.5));
  CHECK(s.sigmas[2] == doctest::Approx(2.0));
  const ScaleSet descending{{2.0, 1.0}}, empty{};
  CHECK_THROWS_AS(descending.validate(), ParameterError);
  CHECK_THROWS_AS(empty.validate(), ParameterError);
}

TEST_CASE("constant volume has zero Hessian eigenvalues") {
  const auto e = hessian_at_scale(Volume(GridSpec(12, 12, 12, 1.0), 3.5f), 1.5);
  for (const auto& l : e.values)
    for (float x : l) CHECK(std::abs(x) < 1e-5);
}

TEST_CASE("Hessian of x^2 at sigma 2 is 8 along x") {
  const auto v = phantom(40, [](double x, double, double) { return (x - 20.0) * (x - 20.0); });
  const auto e = hessian_at_scale(v, 2.0);
  for (std::size_t z = 9; z < 31; ++z)
    for (std::size_t y = 9; y < 31; ++y)
      for (std::size_t x = 9; x < 31; ++x) {
        const auto& l = e.values[v.grid().index(x, y, z)];
        CHECK(std::abs(l[2] - 8.0) < 1e-2);
        CHECK(std::abs(l[0]) < 1e-2);
        CHECK(std::abs(l[1]) < 1e-2);
      }
}

TEST_CASE("closed-form eigenvalues match Jacobi on random symmetric matrices") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0;
  for (int t = 0; t < 100000; ++t) {
    const double a00 = u(rng), a11 = u(rng), a22 = u(rng), a01 = u(rng), a02 = u(rng), a12 = u(rng);
    const auto fast = symmetric_eigenvalues(a00, a11, a22, a01, a02, a12);
    const auto slow = oracle::jacobi_eigenvalues({{{a00, a01, a02}, {a01, a11, a12}, {a02, a12, a22}}});
    const double scale = std::max({std::abs(slow[0]), std::abs(slow[1]), std::abs(slow[2]), 1e-300});
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(fast[k] - slow[k]) / scale);
  }
  CHECK(worst < 1e-5);
  // repeated and diagonal cases
  const auto d = symmetric_eigenvalues(2, 2, 2, 0, 0, 0);
  CHECK(d[0] == 2.0);
  CHECK(d[2] == 2.0);
  const auto e = symmetric_eigenvalues(1, 1, 0, 1, 0, 0);  // {2, 0, 0}
  CHECK(e[0] == doctest::Approx(2.0));
  CHECK(std::abs(e[1]) < 1e-7);
}

TEST_CASE("magnitude ordering with signed tie-break") {
  const auto o = order_by_magnitude({3.0, -1.0, 1.0});
  CHECK(o[0] == -1.0);
  CHECK(o[1] == 1.0);
  CHECK(o[2] == 3.0);
  const auto p = order_by_magnitude({-5.0, 0.0, 2.0});
  CHECK(p[0] == 0.0);
  CHECK(p[2] == -5.0);
}

TEST_CASE("eigenvectors satisfy A v = lambda v") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 2000; ++t) {
    const double a00 = u(rng), a11 = u(rng), a22 = u(rng), a01 = u(rng), a02 = u(rng), a12 = u(rng);
    const auto l = symmetric_eigenvalues(a00, a11, a22, a01, a02, a12);
    for (double lam : l) {
      const auto v = symmetric_eigenvector(a00, a11, a22, a01, a02, a12, lam);
      const double r0 = a00 * v[0] + a01 * v[1] + a02 * v[2] - lam * v[0];
      const double r1 = a01 * v[0] + a11 * v[1] + a12 * v[2] - lam * v[1];
      const double r2 = a02 * v[0] + a12 * v[1] + a22 * v[2] - lam * v[2];
      CHECK(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) == doctest::Approx(1.0));
      if (std::abs(l[0] - l[1]) > 1e-3 && std::abs(l[1] - l[2]) > 1e-3)
        CHECK(std::sqrt(r0 * r0 + r1 * r1 + r2 * r2) < 1e-6 * (1.0 + std::abs(lam)));
    }
  }
}

TEST_CASE("volume eigenvalues are ordered and match Jacobi on the Hessian components") {
  const auto v = random_volume(GridSpec(14, 13, 12, 1.0), 8);
  const double sigma = 1.2;
  const auto h = hessian_components(v, sigma);
  const auto e = hessian_at_scale(v, sigma);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& l = e.values[i];
    CHECK(std::abs(l[0]) <= std::abs(l[1]));
    CHECK(std::abs(l[1]) <= std::abs(l[2]));
    auto ref = oracle::jacobi_eigenvalues({{{h.xx[i], h.xy[i], h.xz[i]}, {h.xy[i], h.yy[i], h.yz[i]}, {h.xz[i], h.yz[i], h.zz[i]}}});
    std::sort(ref.begin(), ref.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    const double scale = std::abs(ref[2]) + 1e-30;
    for (int k = 0; k < 3; ++k) CHECK(std::abs(l[k] - ref[k]) <= 1e-5 * scale);
  }
}

TEST_CASE("Hessian matches finite differences of the smoothed volume") {
  const std::size_t n = 40;
  const auto v = phantom(n, [](double x, double y, double z) {
    return std::exp(-((x - 18) * (x - 18) + (y - 21) * (y - 21) + (z - 19) * (z - 19)) / (2 * 36.0)) +
           0.5 * std::exp(-((x - 24) * (x - 24) / 50.0 + (y - 17) * (y - 17) / 30.0 + (z - 22) * (z - 22) / 70.0));
  });
  const double sigma = 2.0;
  const auto s = oracle::direct_blur(v, sigma);
  const auto h = hessian_components(v, sigma);
  const auto& g = v.grid();
  auto at = [&](std::size_t x, std::size_t y, std::size_t z) { return s[g.index(x, y, z)]; };
  // fourth-order central stencils
  auto d2x = [&](std::size_t x, std::size_t y, std::size_t z) {
    return (-at(x + 2, y, z) + 16 * at(x + 1, y, z) - 30 * at(x, y, z) + 16 * at(x - 1, y, z) - at(x - 2, y, z)) / 12.0;
  };
  auto d1y = [&](std::size_t x, std::size_t y, std::size_t z) {
    return (-at(x, y + 2, z) + 8 * at(x, y + 1, z) - 8 * at(x, y - 1, z) + at(x, y - 2, z)) / 12.0;
  };
  auto dxy = [&](std::size_t x, std::size_t y, std::size_t z) {
    return (-d1y(x + 2, y, z) + 8 * d1y(x + 1, y, z) - 8 * d1y(x - 1, y, z) + d1y(x - 2, y, z)) / 12.0;
  };
  double max_h = 0, worst_xx = 0, worst_xy = 0;
  for (std::size_t z = 12; z < 28; ++z)
    for (std::size_t y = 12; y < 28; ++y)
      for (std::size_t x = 12; x < 28; ++x) {
        const auto i = g.index(x, y, z);
        max_h = std::max({max_h, std::abs(h.xx[i]), std::abs(h.xy[i])});
        worst_xx = std::max(worst_xx, std::abs(h.xx[i] - sigma * sigma * d2x(x, y, z)));
        worst_xy = std::max(worst_xy, std::abs(h.xy[i] - sigma * sigma * dxy(x, y, z)));
      }
  CHECK(worst_xx < 1e-3 * max_h);
  CHECK(worst_xy < 1e-3 * max_h);
}

TEST_CASE("Frangi closed form") {
  CHECK(frangi_voxel(0, 0, 0, 0.5, 0.5, 2.0) == 0.0);
  const double v = frangi_voxel(0, -4, -4, 0.5, 0.5, 2.0);
  CHECK(std::abs(v - (1 - std::exp(-2.0)) * (1 - std::exp(-4.0))) < 1e-12);
  CHECK(std::abs(v - 0.8489) < 1e-4);
  CHECK(frangi_voxel(0, 4, 4, 0.5, 0.5, 2.0) == 0.0);    // dark tube
  CHECK(frangi_voxel(0.1, -4, 4, 0.5, 0.5, 2.0) == 0.0);  // saddle
  CHECK(frangi_voxel(0.1, 0.0, -4, 0.5, 0.5, 2.0) == 0.0);
  // blob is suppressed relative to a tube of equal strength
  CHECK(frangi_voxel(-4, -4, -4, 0.5, 0.5, 2.0) < 0.2 * v);
}

TEST_CASE("zero volume gives zero response") {
  const auto r = frangi_multiscale(Volume(GridSpec(16, 16, 16, 1.0)), {{1.0, 2.0}}, {});
  for (float x : r.values()) CHECK(x == 0.0f);
}

TEST_CASE("dark tube: zero with bright polarity, detected with dark polarity") {
  const auto bright = cylinder_z(24, 2.0);
  Volume dark = bright;
  for (auto& x : dark.values()) x = 1.0f - x;
  const auto a = frangi_multiscale(dark, {{1.5}}, {}, Polarity::bright_on_dark);
  const auto b = frangi_multiscale(dark, {{1.5}}, {}, Polarity::dark_on_bright);
  const auto ref = frangi_multiscale(bright, {{1.5}}, {});
  const std::size_t c = 11;
  CHECK(a(c, c, 12) == 0.0f);
  CHECK(b(c, c, 12) > 0.5f);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(b[i] - ref[i]) < 1e-6);
}

TEST_CASE("single-scale and subset properties of the multi-scale max") {
  const auto v = random_volume(GridSpec(16, 16, 16, 1.0), 2);
  VesselnessParams p;
  const auto single = frangi_multiscale(v, {{1.5}}, p);
  CHECK(single == frangi_response(hessian_at_scale(v, 1.5), p));
  const auto small = frangi_multiscale(v, {{1.0, 2.0}}, p);
  const auto large = frangi_multiscale(v, {{1.0, 1.5, 2.0}}, p);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(large[i] >= small[i]);
    CHECK(large[i] >= single[i]);
    CHECK(large[i] >= 0.0f);
    CHECK(large[i] <= 1.0f);
  }
}

TEST_CASE("bright fiber: on-axis response beats the response at 4 radii") {
  const std::size_t n = 40;
  const double r = 1.67;
  const auto v = cylinder_z(n, r);
  const auto out = frangi_multiscale(v, default_scales(6.5, 3.9), {});
  const double c = 0.5 * double(n - 1);
  double on = 0, off = 0;
  int non = 0, noff = 0;
  for (std::size_t z = 10; z < 30; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double d = std::hypot(x - c, y - c);
        if (d < 0.75) {
          on += out(x, y, z);
          ++non;
        } else if (std::abs(d - 4 * r) < 0.5) {
          off += out(x, y, z);
          ++noff;
        }
      }
  REQUIRE(non > 0);
  REQUIRE(noff > 0);
  CHECK(on / non > 3.0 * off / noff);
}

TEST_CASE("response range, offset invariance and c_auto scale invariance") {
  const auto v = cylinder_z(24, 2.0);
  const ScaleSet s{{1.0, 2.0}};
  const auto base = frangi_multiscale(v, s, {});
  Volume offset = v, scaled = v;
  for (auto& x : offset.values()) x += 5.0f;
  for (auto& x : scaled.values()) x *= 3.0f;
  const auto ro = frangi_multiscale(offset, s, {});
  const auto rs = frangi_multiscale(scaled, s, {});
  double worst_o = 0, worst_s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(base[i] >= 0.0f);
    CHECK(base[i] <= 1.0f);
    worst_o = std::max(worst_o, double(std::abs(ro[i] - base[i])));
    worst_s = std::max(worst_s, double(std::abs(rs[i] - base[i])));
  }
  CHECK(worst_o < 1e-6);
  CHECK(worst_s < 1e-6);
  const auto rnd = frangi_multiscale(random_volume(GridSpec(12, 12, 12, 1.0), 3), s, {});
  for (float x : rnd.values()) CHECK((x >= 0.0f && x <= 1.0f));
}

TEST_CASE("selectivity: tube beats plate and sphere of equal amplitude") {
  const std::size_t n = 33;
  const double c = 16.0, w = 2.0;
  auto g = [&](double d2) { return std::exp(-d2 / (2 * w * w)); };
  const auto tube = phantom(n, [&](double x, double y, double) { return g((x - c) * (x - c) + (y - c) * (y - c)); });
  const auto plate = phantom(n, [&](double x, double, double) { return g((x - c) * (x - c)); });
  const auto sphere = phantom(
      n, [&](double x, double y, double z) { return g((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c)); });
  VesselnessParams p;
  p.c_auto = false;
  p.c = 0.05;
  const ScaleSet s{{2.0}};
  const float t = frangi_multiscale(tube, s, p)(16, 16, 16);
  const float pl = frangi_multiscale(plate, s, p)(16, 16, 16);
  const float sp = frangi_multiscale(sphere, s, p)(16, 16, 16);
  CHECK(t > 0.5f);
  CHECK(t > pl);
  CHECK(t > sp);
}

TEST_CASE("parallel Hessian and Frangi are bit-identical to the serial reference") {
  const auto v = random_volume(GridSpec(19, 17, 15, 1.0), 4);
  const auto a = hessian_at_scale(v, 1.3), b = reference::hessian_at_scale(v, 1.3);
  CHECK(a.values == b.values);
  const ScaleSet s{{1.0, 1.5, 2.0}};
  CHECK(frangi_multiscale(v, s, {}) == reference::frangi_multiscale(v, s, {}));
}

TEST_CASE("binarize: fixed threshold and Otsu") {
  Volume two(GridSpec(2, 1, 1, 1.0), std::vector<float>{0.2f, 0.7f});
  const auto f = binarize(two, BinarizeMethod::fixed(0.5));
  CHECK(f.mask[0] == 0);
  CHECK(f.mask[1] == 1);
  CHECK_THROWS_AS(binarize(two, BinarizeMethod::fixed(std::nan(""))), ParameterError);

  Volume bi(GridSpec(10, 10, 10, 1.0));
  for (std::size_t i = 0; i < bi.size(); ++i) bi[i] = i % 2 ? 0.9f : 0.1f;
  const auto o = binarize(bi, BinarizeMethod::otsu());
  CHECK(o.threshold > 0.1);
  CHECK(o.threshold <= 0.9);
  for (std::size_t i = 0; i < bi.size(); ++i) CHECK(o.mask[i] == (i % 2 ? 1u : 0u));

  CHECK_THROWS_WITH_AS(otsu_threshold(Volume(GridSpec(3, 3, 3, 1.0), 0.4f)), doctest::Contains("degenerate"),
                       ParameterError);
}

TEST_CASE("Otsu threshold maximizes between-class variance over all 256 splits") {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> a(0.3f, 0.08f), b(0.75f, 0.05f);
  Volume v(GridSpec(20, 20, 20, 1.0));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % 3 ? a(rng) : b(rng);
  const double t = otsu_threshold(v);
  const auto [lo_it, hi_it] = std::minmax_element(v.values().begin(), v.values().end());
  const double lo = *lo_it, width = (*hi_it - lo) / 256.0;
  auto between = [&](double thr) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (float x : v.values()) {
      // class membership by bin, the same partition as value >= thr at bin edges
      const int bin = std::min(255, int((x - lo) / width));
      if (lo + bin * width >= thr - 1e-12) {
        n1 += 1;
        s1 += bin;
      } else {
        n0 += 1;
        s0 += bin;
      }
    }
    if (n0 == 0 || n1 == 0) return 0.0;
    const double m0 = s0 / n0, m1 = s1 / n1;
    return n0 * n1 * (m0 - m1) * (m0 - m1);
  };
  double best = 0;
  for (int k = 1; k < 256; ++k) best = std::max(best, between(lo + k * width));
  CHECK(between(t) == doctest::Approx(best).epsilon(1e-12));
  const auto m = binarize(v, BinarizeMethod::otsu());
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(m.mask[i] == (v[i] >= m.threshold ? 1u : 0u));
}

TEST_CASE("connected components with 26-connectivity") {
  GridSpec g(8, 8, 8, 1.0);
  LabelVolume zero(g);
  const auto z = connected_components(zero);
  CHECK(z.count == 0);
  LabelVolume far(g);
  far(0, 0, 0) = 1;
  far(5, 5, 5) = 1;
  CHECK(connected_components(far).count == 2);
  LabelVolume corner(g);
  corner(0, 0, 0) = 1;
  corner(1, 1, 1) = 1;
  CHECK(connected_components(corner).count == 1);
  LabelVolume bad(g);
  bad[3] = 2;
  CHECK_THROWS_AS(connected_components(bad), ParameterError);
}

TEST_CASE("connected components agree with a union-find oracle") {
  std::mt19937_64 rng(10);
  std::bernoulli_distribution on(0.12);
  GridSpec g(15, 13, 11, 1.0);
  LabelVolume b(g);
  for (auto& x : b.values()) x = on(rng);
  const auto cc = connected_components(b);
  std::vector<std::size_t> parent(b.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t z = 0; z < 11; ++z)
    for (std::size_t y = 0; y < 13; ++y)
      for (std::size_t x = 0; x < 15; ++x) {
        if (!b(x, y, z)) continue;
        for (const auto& o : neighbor_offsets_26()) {
          const auto X = std::ptrdiff_t(x) + o[0], Y = std::ptrdiff_t(y) + o[1], Z = std::ptrdiff_t(z) + o[2];
          if (g.contains(X, Y, Z) && b(std::size_t(X), std::size_t(Y), std::size_t(Z)))
            parent[find(g.index(x, y, z))] = find(g.index(std::size_t(X), std::size_t(Y), std::size_t(Z)));
        }
      }
  std::map<std::size_t, std::uint32_t> first_seen;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b[i]) {
      CHECK(cc.labels[i] == 0);
      continue;
    }
    const auto root = find(i);
    const auto it = first_seen.try_emplace(root, std::uint32_t(first_seen.size() + 1)).first;
    CHECK(cc.labels[i] == it->second);
  }
  CHECK(cc.count == first_seen.size());
}

TEST_CASE("structure tensor: constant volume is invalid everywhere") {
  const auto o = structure_tensor_orientation(Volume(GridSpec(10, 10, 10, 1.0), 2.0f), 1.0, 2.0);
  for (auto x : o.valid.values()) CHECK(x == 0);
}

TEST_CASE("structure tensor: cylinder orientation and rotation equivariance") {
  const std::size_t n = 32;
  const auto v = cylinder_z(n, 2.5);
  Volume rotated(v.grid());  // 90 degrees about x: (x, y, z) -> (x, -z, y), cylinder along y
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) rotated(x, y, z) = v(x, n - 1 - z, y);
  const auto o = structure_tensor_orientation(v, 1.0, 2.0);
  const auto r = structure_tensor_orientation(rotated, 1.0, 2.0);
  const double c = 0.5 * double(n - 1);
  int checked = 0;
  for (std::size_t z = 8; z < n - 8; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        if (std::hypot(x - c, y - c) > 3.0) continue;
        REQUIRE(o.valid(x, y, z) == 1);
        const double a = angle_deg({o.ox(x, y, z), o.oy(x, y, z), o.oz(x, y, z)}, {0, 0, 1});
        CHECK(a < 5.0);
        // same voxel in the rotated frame
        const std::size_t ry = z, rz = n - 1 - y;
        REQUIRE(r.valid(x, ry, rz) == 1);
        const double b = angle_deg({r.ox(x, ry, rz), r.oy(x, ry, rz), r.oz(x, ry, rz)}, {0, 1, 0});
        CHECK(b < 5.0);
        ++checked;
      }
  CHECK(checked > 100);
}

TEST_CASE("orientation field files") {
  const auto dir = std::filesystem::temp_directory_path() / "fiberseg_test_orient";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto o = structure_tensor_orientation(cylinder_z(12, 2.0), 1.0, 1.0);
  write_orientation(o, (dir / "o").string());
  for (const char* suffix : {"o.ox", "o.oy", "o.oz", "o.valid"}) {
    CHECK(std::filesystem::exists(dir / (std::string(suffix) + ".json")));
    CHECK(std::filesystem::exists(dir / (std::string(suffix) + ".raw")));
  }
  CHECK(std::holds_alternative<MaskVolume>(read_volume((dir / "o.valid").string())));
}
