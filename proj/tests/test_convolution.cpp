#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fiberseg/convolution.hpp"
#include "oracles.hpp"

using namespace fiberseg;

namespace {

Volume random_volume(GridSpec g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 10.0f);
  Volume v(g);
  for (auto& x : v.values()) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("reflect_index is half-sample symmetric") {
  CHECK(reflect_index(-1, 5) == 0);
  CHECK(reflect_index(-2, 5) == 1);
  CHECK(reflect_index(5, 5) == 4);
  CHECK(reflect_index(6, 5) == 3);
  CHECK(reflect_index(10, 5) == 0);
  CHECK(reflect_index(-11, 5) == 0);
  CHECK(reflect_index(0, 1) == 0);
  CHECK(reflect_index(-7, 1) == 0);
}

TEST_CASE("gaussian kernels: support, normalization and moments") {
  for (double sigma : {0.5, 1.0, 1.5, 2.0, 3.3}) {
    const auto g = gaussian_kernel(sigma);
    CHECK(g.radius == std::max(1, static_cast<int>(std::ceil(4.0 * sigma))));
    CHECK(std::accumulate(g.taps.begin(), g.taps.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    const auto d1 = gaussian_derivative_kernel(sigma, 1);
    const auto d2 = gaussian_derivative_kernel(sigma, 2);
    double s0 = 0, s1 = 0, t0 = 0, t2 = 0;
    for (int k = -d1.radius; k <= d1.radius; ++k) {
      s0 += d1.at(k);
      s1 += k * d1.at(k);
      CHECK(d1.at(k) == doctest::Approx(-d1.at(-k)));
    }
    for (int k = -d2.radius; k <= d2.radius; ++k) {
      t0 += d2.at(k);
      t2 += double(k) * k * d2.at(k);
    }
    CHECK(std::abs(s0) < 1e-14);
    // out[i] = sum h[k] in[i-k]; for in = x this gives -sum k h[k] = 1
    CHECK(-s1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(t0) < 1e-12);
    CHECK(t2 == doctest::Approx(2.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gaussian_kernel(0.0), ParameterError);
  CHECK_THROWS_AS(gaussian_derivative_kernel(1.0, 3), ParameterError);
}

TEST_CASE("derivative kernels differentiate polynomials in the interior") {
  GridSpec g(64, 1, 1, 1.0);
  Volume ramp(g), quad(g);
  for (std::size_t x = 0; x < 64; ++x) {
    ramp[x] = float(3.0 * x + 1.0);
    quad[x] = float(0.5 * double(x) * double(x));
  }
  const Dims dims{64, 1, 1};
  std::vector<double> out(64);
  convolve_axis<float, double>(ramp.data(), out, dims, Axis::x, gaussian_derivative_kernel(2.0, 1));
  for (std::size_t x = 10; x < 54; ++x) CHECK(out[x] == doctest::Approx(3.0).epsilon(1e-6));
  convolve_axis<float, double>(quad.data(), out, dims, Axis::x, gaussian_derivative_kernel(2.0, 2));
  for (std::size_t x = 10; x < 54; ++x) CHECK(out[x] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("separable blur matches direct 3D summation") {
  const auto v = random_volume(GridSpec(12, 10, 9, 1.0), 3);
  for (double sigma : {0.7, 1.3}) {
    const auto fast = gaussian_blur(v, sigma);
    const auto slow = oracle::direct_blur(v, sigma);
    double worst = 0;
    for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(double(fast[i]) - slow[i]));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("blur preserves the global mean on 32^3 volumes") {
  const auto v = random_volume(GridSpec(32, 32, 32, 1.0), 9);
  const auto b = gaussian_blur(v, 2.5);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    m0 += v[i];
    m1 += b[i];
  }
  CHECK(std::abs(m1 - m0) / m0 < 1e-4);
}

TEST_CASE("blur with sigma 0 is the identity; negative sigma is rejected") {
  const auto v = random_volume(GridSpec(5, 4, 3, 1.0), 1);
  CHECK(gaussian_blur(v, 0.0) == v);
  CHECK_THROWS_AS(gaussian_blur(v, -1.0), ParameterError);
}

TEST_CASE("parallel convolution is bit-identical to the serial reference") {
  const auto v = random_volume(GridSpec(23, 17, 19, 1.0), 5);
  const Dims dims{23, 17, 19};
  const auto k = gaussian_derivative_kernel(1.5, 2);
  for (Axis a : {Axis::x, Axis::y, Axis::z}) {
    std::vector<double> p(v.size()), s(v.size());
    convolve_axis<float, double>(v.data(), p, dims, a, k);
    reference::convolve_axis<float, double>(v.data(), s, dims, a, k);
    CHECK(p == s);
  }
  CHECK(gaussian_blur(v, 1.7) == reference::gaussian_blur(v, 1.7));
}

TEST_CASE("short axes shorter than the kernel still reflect correctly") {
  // 2-voxel axis with a radius-8 kernel: every tap folds back into {0, 1}
  Volume v(GridSpec(2, 1, 1, 1.0), std::vector<float>{1.0f, 3.0f});
  const auto b = gaussian_blur(v, 2.0);
  CHECK(double(b[0]) + double(b[1]) == doctest::Approx(4.0).epsilon(1e-6));
  const auto slow = oracle::direct_blur(v, 2.0);
  CHECK(b[0] == doctest::Approx(slow[0]).epsilon(1e-6));
}
