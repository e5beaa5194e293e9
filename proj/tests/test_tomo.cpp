#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dice/tomo.hpp"
#include "test_util.hpp"

using namespace dice;
using dice::test::random_image;
using dice::test::random_sinogram;

namespace {

/// Disk with fractional pixel coverage from k x k supersampling.
Image soft_disk(std::size_t n, double r, int k = 8) {
  Image img(n, n);
  const double c = 0.5 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      int hits = 0;
      for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
          const double x = double(j) + (a + 0.5) / k - c;
          const double y = double(i) + (b + 0.5) / k - c;
          hits += x * x + y * y <= r * r;
        }
      img(i, j) = double(hits) / (k * k);
    }
  return img;
}

}  // namespace

TEST(Tomo, ZeroImageGivesZeroSinogram) {
  const Geometry g = parallel_geometry(32, 45);
  const Sinogram s = forward_project(Image(32, 32), g);
  for (double v : s.values) EXPECT_EQ(v, 0.0);
}

TEST(Tomo, ZeroSinogramGivesZeroImage) {
  const Geometry g = parallel_geometry(32, 45);
  const Image img = back_project(Sinogram(g), g);
  for (double v : img.values) EXPECT_EQ(v, 0.0);
}

TEST(Tomo, DiskViewMassMatchesArea) {
  const std::size_t n = 128;
  const double r = 40.0;
  const Geometry g = parallel_geometry(n, 90);
  const Sinogram s = forward_project(soft_disk(n, r), g);
  const double area = std::numbers::pi * r * r;
  for (std::size_t a = 0; a < g.n_angles(); ++a) {
    double sum = 0.0;
    for (double v : s.row(a)) sum += v;
    EXPECT_NEAR(sum * g.detector_spacing, area, 0.01 * area) << "view " << a;
  }
}

TEST(Tomo, Linearity) {
  std::mt19937_64 rng(3);
  const Geometry g = parallel_geometry(32, 60);
  const Image x1 = random_image(32, 32, rng), x2 = random_image(32, 32, rng);
  const double a = 1.7, b = -0.35;
  Image combo(32, 32);
  for (std::size_t i = 0; i < combo.size(); ++i) combo.values[i] = a * x1.values[i] + b * x2.values[i];
  const Sinogram lhs = forward_project(combo, g);
  const Sinogram p1 = forward_project(x1, g), p2 = forward_project(x2, g);
  std::vector<double> rhs(lhs.values.size());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * p1.values[i] + b * p2.values[i];
  EXPECT_LE(detail::diff_norm(lhs.values, rhs), 1e-10 * detail::norm(rhs));
}

TEST(Tomo, AdjointDotProduct) {
  std::mt19937_64 rng(11);
  Geometry g = parallel_geometry(32, 90, 64);
  for (int trial = 0; trial < 100; ++trial) {
    const Image x = random_image(32, 32, rng);
    const Sinogram y = random_sinogram(g, rng);
    const Sinogram ax = forward_project(x, g);
    const Image aty = back_project(y, g);
    const double lhs = detail::dot(ax.values, y.values);
    const double rhs = detail::dot(x.values, aty.values);
    ASSERT_LE(std::abs(lhs - rhs), 1e-6 * detail::norm(ax.values) * detail::norm(y.values));
  }
}

TEST(Tomo, AdjointHoldsForNonUnitSpacings) {
  std::mt19937_64 rng(12);
  Geometry g = parallel_geometry(20, 33, 41, 0.7);
  g.detector_spacing = 0.45;
  for (int trial = 0; trial < 10; ++trial) {
    const Image x = random_image(20, 20, rng);
    const Sinogram y = random_sinogram(g, rng);
    const double lhs = detail::dot(forward_project(x, g).values, y.values);
    const double rhs = detail::dot(x.values, back_project(y, g).values);
    EXPECT_NEAR(lhs, rhs, 1e-10 * (std::abs(lhs) + 1.0));
  }
}

TEST(Tomo, SingleRaySupport) {
  const std::size_t n = 32;
  const Geometry g = parallel_geometry(n, 36);
  for (std::size_t a : {0u, 5u, 9u, 13u, 27u}) {
    const std::size_t k = g.n_detectors / 2 + 3;
    Sinogram y(g);
    y(a, k) = 1.0;
    const Image img = back_project(y, g);

    const double c = std::cos(g.angles[a]), s = std::sin(g.angles[a]);
    const double bin_center = (double(k) - 0.5 * double(g.n_detectors - 1)) * g.detector_spacing;
    const double shadow = 0.5 * g.pixel_size * (std::abs(c) + std::abs(s));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double x = (double(j) - 0.5 * double(n - 1)) * g.pixel_size;
        const double yy = (0.5 * double(n - 1) - double(i)) * g.pixel_size;
        const double sc = x * c + yy * s;
        const bool intersects = std::abs(sc - bin_center) < shadow + 0.5 * g.detector_spacing;
        if (img(i, j) != 0.0) {
          EXPECT_TRUE(intersects) << "angle " << a << " pixel " << i << "," << j;
          ++hit;
        }
        if (std::abs(sc - bin_center) < 0.25 * g.detector_spacing) EXPECT_GT(img(i, j), 0.0);
      }
    EXPECT_GT(hit, 0u);
  }
}

TEST(Tomo, RotationalConsistencyOfDisk) {
  const std::size_t n = 96;
  const Geometry g = parallel_geometry(n, 64);
  const Sinogram s = forward_project(soft_disk(n, 30.0), g);
  std::vector<double> mean(g.n_detectors, 0.0);
  for (std::size_t a = 0; a < g.n_angles(); ++a)
    for (std::size_t d = 0; d < g.n_detectors; ++d) mean[d] += s(a, d) / double(g.n_angles());
  for (std::size_t a = 0; a < g.n_angles(); ++a)
    EXPECT_LE(dice::test::rel_rms(s.row(a), mean), 0.01) << "view " << a;
}

TEST(Tomo, Deterministic) {
  std::mt19937_64 rng(5);
  const Geometry g = parallel_geometry(40, 50);
  const Image x = random_image(40, 40, rng);
  const Sinogram y = random_sinogram(g, rng);
  EXPECT_EQ(forward_project(x, g).values, forward_project(x, g).values);
  EXPECT_EQ(back_project(y, g).values, back_project(y, g).values);
}

TEST(Tomo, ShapeMismatchThrows) {
  const Geometry g = parallel_geometry(16, 10);
  EXPECT_THROW(forward_project(Image(15, 16), g), shape_error);
  EXPECT_THROW(back_project(Sinogram(10, 3), g), shape_error);
}

TEST(Tomo, GeometryValidation) {
  Geometry g = parallel_geometry(16, 10);
  EXPECT_NO_THROW(g.validate());
  EXPECT_TRUE(g.covers_image());
  g.angles[3] = g.angles[2];
  EXPECT_THROW(g.validate(), numerical_error);
  Geometry narrow = parallel_geometry(16, 10, 8);
  EXPECT_FALSE(narrow.covers_image());
}

TEST(Mask, AllTrueIsIdentity) {
  std::mt19937_64 rng(1);
  const Geometry g = parallel_geometry(16, 12);
  const Sinogram y = random_sinogram(g, rng);
  EXPECT_EQ(apply_mask(y, AngularMask::all_observed(12)).values, y.values);
}

TEST(Mask, SingleObservedRow) {
  std::mt19937_64 rng(2);
  const Geometry g = parallel_geometry(16, 12);
  const Sinogram y = random_sinogram(g, rng, 0.5, 1.0);
  std::vector<bool> obs(12, false);
  obs[7] = true;
  const Sinogram m = apply_mask(y, AngularMask(obs));
  std::size_t nonzero_rows = 0;
  for (std::size_t a = 0; a < 12; ++a) {
    bool any = false;
    for (double v : m.row(a)) any = any || v != 0.0;
    nonzero_rows += any;
  }
  EXPECT_EQ(nonzero_rows, 1u);
}

TEST(Mask, NinetyDegreesOf720Views) {
  const Geometry g = parallel_geometry(16, 720);
  const AngularMask m = AngularMask::from_degrees(g, 0.0, 90.0);
  EXPECT_EQ(m.observed_count(), 360u);
  const Sinogram y(720, g.n_detectors, 1.0);
  const Sinogram out = apply_mask(y, m);
  for (std::size_t a = 0; a < 720; ++a)
    for (double v : out.row(a)) EXPECT_EQ(v, a < 360 ? 1.0 : 0.0);
}

TEST(Mask, RejectsEmptyAndMismatched) {
  EXPECT_THROW(AngularMask(std::vector<bool>(5, false)), shape_error);
  EXPECT_THROW(apply_mask(Sinogram(4, 3), AngularMask::all_observed(5)), shape_error);
}
