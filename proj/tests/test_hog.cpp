#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "blinkline/hog.hpp"
#include "helpers.hpp"

using namespace blinkline;

namespace {

// Angle-quantization oracle: nearest of the 18 signed directions by angular
// distance, ties toward the smaller index.
int orientation_oracle(double gx, double gy) {
  if (gx == 0.0 && gy == 0.0) return 0;
  const double two_pi = 2.0 * std::numbers::pi;
  double phi = std::atan2(gy, gx);
  if (phi < 0) phi += two_pi;
  const double sector = two_pi / 18.0;
  int best = 0;
  double best_dist = two_pi;
  for (int d = 0; d < 18; ++d) {
    double dist = std::fabs(phi - d * sector);
    dist = std::min(dist, two_pi - dist);
    if (dist < best_dist - 1e-12) {
      best_dist = dist;
      best = d;
    }
  }
  return best;
}

// Scalar accumulation oracle for histogramization.
CellGrid histogram_oracle(const GradientField& g) {
  CellGrid cg;
  cg.cells_w = g.width / 8;
  cg.cells_h = g.height / 8;
  cg.bins.assign(std::size_t(cg.cells_w) * cg.cells_h * 18, 0.0);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double m = g.magnitude[g.index(x, y)];
      if (m == 0) continue;
      for (int cy = 0; cy < cg.cells_h; ++cy) {
        for (int cx = 0; cx < cg.cells_w; ++cx) {
          const double wx = 1.0 - std::fabs(x - (8.0 * cx + 3.5)) / 8.0;
          const double wy = 1.0 - std::fabs(y - (8.0 * cy + 3.5)) / 8.0;
          if (wx <= 0 || wy <= 0) continue;
          cg.cell(cx, cy)[g.orientation[g.index(x, y)]] += m * wx * wy;
        }
      }
    }
  }
  return cg;
}

GradientField random_field(int w, int h, std::mt19937_64& rng, int border = 0) {
  GradientField g;
  g.width = w;
  g.height = h;
  g.orientation.assign(std::size_t(w) * h, 0);
  g.magnitude.assign(std::size_t(w) * h, 0.0);
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      g.orientation[g.index(x, y)] = std::uint8_t(rng() % 18);
      g.magnitude[g.index(x, y)] = testutil::urand(rng, 0.0, 10.0);
    }
  }
  return g;
}

}  // namespace

TEST_CASE("compute_gradients basic cases") {
  SUBCASE("constant image has zero magnitude everywhere") {
    const GradientField g = compute_gradients(make_image(10, 10, 42.0));
    for (const double m : g.magnitude) CHECK(m == 0.0);
  }
  SUBCASE("horizontal ramp") {
    GrayImage img = make_image(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) img.at(x, y) = x;
    const GradientField g = compute_gradients(img);
    for (int y = 1; y < 7; ++y) {
      for (int x = 1; x < 7; ++x) {
        CHECK(g.magnitude[g.index(x, y)] == 2.0);
        CHECK(g.orientation[g.index(x, y)] == 0);
      }
    }
  }
  SUBCASE("border ring is zero") {
    std::mt19937_64 rng(1);
    const GradientField g = compute_gradients(testutil::random_image(9, 7, rng));
    for (int x = 0; x < 9; ++x) {
      CHECK(g.magnitude[g.index(x, 0)] == 0.0);
      CHECK(g.magnitude[g.index(x, 6)] == 0.0);
    }
    for (int y = 0; y < 7; ++y) {
      CHECK(g.magnitude[g.index(0, y)] == 0.0);
      CHECK(g.magnitude[g.index(8, y)] == 0.0);
    }
  }
  SUBCASE("too small") {
    CHECK_THROWS_AS(compute_gradients(make_image(2, 5)), std::invalid_argument);
  }
}

TEST_CASE("compute_gradients matches the angle-quantization oracle") {
  std::mt19937_64 rng(77);
  const GrayImage img = testutil::random_image(16, 16, rng);
  const GradientField g = compute_gradients(img);
  for (int y = 1; y < 15; ++y) {
    for (int x = 1; x < 15; ++x) {
      const double gx = img.at(x + 1, y) - img.at(x - 1, y);
      const double gy = img.at(x, y + 1) - img.at(x, y - 1);
      CHECK(g.magnitude[g.index(x, y)] ==
            doctest::Approx(std::sqrt(gx * gx + gy * gy)).epsilon(1e-12));
      CHECK(int(g.orientation[g.index(x, y)]) == orientation_oracle(gx, gy));
    }
  }
}

TEST_CASE("gradients ignore a global intensity offset") {
  std::mt19937_64 rng(78);
  const GrayImage img = testutil::random_image(12, 12, rng, 0.0, 200.0);
  GrayImage shifted = img;
  for (double& p : shifted.pixels) p += 55.0;
  const GradientField a = compute_gradients(img);
  const GradientField b = compute_gradients(shifted);
  for (std::size_t i = 0; i < a.magnitude.size(); ++i) {
    CHECK(a.magnitude[i] == doctest::Approx(b.magnitude[i]).epsilon(1e-9));
    CHECK(a.orientation[i] == b.orientation[i]);
  }
}

TEST_CASE("histogramize splits mass by the bilinear cell weights") {
  GradientField g;
  g.width = 32;
  g.height = 32;
  g.orientation.assign(32 * 32, 0);
  g.magnitude.assign(32 * 32, 0.0);
  g.orientation[g.index(11, 11)] = 4;
  g.magnitude[g.index(11, 11)] = 8.0;

  const CellGrid cg = histogramize(g);
  // (11 - 3.5) / 8 = 0.9375: cells 0 and 1 bracket in both axes.
  const double w1 = 0.9375, w0 = 0.0625;
  CHECK(cg.cell(0, 0)[4] == doctest::Approx(8.0 * w0 * w0).epsilon(1e-12));
  CHECK(cg.cell(1, 0)[4] == doctest::Approx(8.0 * w1 * w0).epsilon(1e-12));
  CHECK(cg.cell(0, 1)[4] == doctest::Approx(8.0 * w0 * w1).epsilon(1e-12));
  CHECK(cg.cell(1, 1)[4] == doctest::Approx(8.0 * w1 * w1).epsilon(1e-12));

  double total = 0;
  for (const double b : cg.bins) total += b;
  CHECK(total == doctest::Approx(8.0).epsilon(1e-12));  // interior pixel: weights sum to 1
}

TEST_CASE("histogramize matches the double-loop oracle") {
  std::mt19937_64 rng(9);
  const GradientField g = random_field(32, 32, rng);
  const CellGrid got = histogramize(g);
  const CellGrid want = histogram_oracle(g);
  REQUIRE(got.bins.size() == want.bins.size());
  for (std::size_t i = 0; i < got.bins.size(); ++i)
    CHECK(got.bins[i] == doctest::Approx(want.bins[i]).epsilon(1e-9));
}

TEST_CASE("histogram mass is conserved for interior-supported fields") {
  std::mt19937_64 rng(10);
  const GradientField g = random_field(48, 40, rng, 8);
  double total_mag = 0;
  for (const double m : g.magnitude) total_mag += m;
  const CellGrid cg = histogramize(g);
  double total_bins = 0;
  for (const double b : cg.bins) total_bins += b;
  CHECK(total_bins == doctest::Approx(total_mag).epsilon(1e-6));
}

TEST_CASE("cell_energy") {
  CellGrid cg;
  cg.cells_w = 2;
  cg.cells_h = 1;
  cg.bins.assign(2 * 18, 0.0);
  SUBCASE("zeros give zero energy") {
    const EnergyGrid eg = cell_energy(cg);
    CHECK(eg.at(0, 0) == 0.0);
    CHECK(eg.at(1, 0) == 0.0);
  }
  SUBCASE("all-ones cell gives 36") {
    for (int d = 0; d < 18; ++d) cg.cell(0, 0)[d] = 1.0;
    CHECK(cell_energy(cg).at(0, 0) == 36.0);
  }
  SUBCASE("random cells match the formula") {
    std::mt19937_64 rng(12);
    for (int d = 0; d < 18; ++d) {
      cg.cell(0, 0)[d] = testutil::urand(rng, 0, 5);
      cg.cell(1, 0)[d] = testutil::urand(rng, 0, 5);
    }
    const EnergyGrid eg = cell_energy(cg);
    for (int cx = 0; cx < 2; ++cx) {
      double want = 0;
      for (int n = 0; n < 9; ++n) {
        const double s = cg.cell(cx, 0)[n] + cg.cell(cx, 0)[n + 9];
        want += s * s;
      }
      CHECK(eg.at(cx, 0) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

namespace {

// Straight-line reimplementation of the 31-feature construction.
std::vector<double> feature_oracle(const CellGrid& cells, const EnergyGrid& en, int cx, int cy) {
  auto E = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= cells.cells_w || y >= cells.cells_h) return 0.0;
    return en.at(x, y);
  };
  const double* b = cells.cell(cx, cy);
  const int as[4] = {-1, -1, +1, +1};
  const int bs[4] = {-1, +1, -1, +1};
  double N[4];
  for (int k = 0; k < 4; ++k)
    N[k] = 1.0 / std::sqrt(E(cx, cy) + E(cx + as[k], cy) + E(cx, cy + bs[k]) +
                           E(cx + as[k], cy + bs[k]) + 1e-10);
  std::vector<double> f(31, 0.0);
  for (int d = 0; d < 18; ++d) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += std::min(b[d] * N[k], 0.2);
    f[d] = 0.5 * s;
  }
  for (int u = 0; u < 9; ++u) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += std::min((b[u] + b[u + 9]) * N[k], 0.2);
    f[18 + u] = 0.5 * s;
  }
  for (int k = 0; k < 4; ++k) {
    double t = 0;
    for (int d = 0; d < 18; ++d) t += std::min(b[d] * N[k], 0.2);
    f[27 + k] = 0.2357 * t;
  }
  return f;
}

CellGrid random_cells(int w, int h, std::mt19937_64& rng) {
  CellGrid cg;
  cg.cells_w = w;
  cg.cells_h = h;
  cg.bins.assign(std::size_t(w) * h * 18, 0.0);
  for (double& b : cg.bins) b = testutil::urand(rng, 0.0, 4.0);
  return cg;
}

}  // namespace

TEST_CASE("compute_features") {
  SUBCASE("all-zero histograms give all-zero features") {
    CellGrid cg;
    cg.cells_w = 3;
    cg.cells_h = 3;
    cg.bins.assign(9 * 18, 0.0);
    const FeatureImage fi = compute_features(cg, cell_energy(cg));
    for (const double v : fi.values) CHECK(v == 0.0);
  }
  SUBCASE("normalized features never exceed 0.4") {
    std::mt19937_64 rng(21);
    const CellGrid cg = random_cells(5, 4, rng);
    const FeatureImage fi = compute_features(cg, cell_energy(cg));
    for (int cy = 0; cy < 4; ++cy) {
      for (int cx = 0; cx < 5; ++cx) {
        const double* f = fi.cell(cx, cy);
        for (int d = 0; d < 27; ++d) {
          CHECK(f[d] >= 0.0);
          CHECK(f[d] <= 0.4 + 1e-12);
        }
      }
    }
  }
  SUBCASE("random grid matches the straight-line oracle") {
    std::mt19937_64 rng(22);
    const CellGrid cg = random_cells(6, 6, rng);
    const EnergyGrid eg = cell_energy(cg);
    const FeatureImage fi = compute_features(cg, eg);
    for (int cy = 0; cy < 6; ++cy) {
      for (int cx = 0; cx < 6; ++cx) {
        const std::vector<double> want = feature_oracle(cg, eg, cx, cy);
        const double* got = fi.cell(cx, cy);
        for (int d = 0; d < 31; ++d) CHECK(got[d] == doctest::Approx(want[d]).epsilon(1e-9));
      }
    }
  }
  SUBCASE("dimension mismatch") {
    CellGrid cg;
    cg.cells_w = 2;
    cg.cells_h = 2;
    cg.bins.assign(4 * 18, 0.0);
    EnergyGrid eg;
    eg.cells_w = 3;
    eg.cells_h = 2;
    eg.energy.assign(6, 0.0);
    CHECK_THROWS_AS(compute_features(cg, eg), std::invalid_argument);
  }
}

TEST_CASE("rotating orientation bins permutes signed/unsigned features only") {
  std::mt19937_64 rng(23);
  const CellGrid cg = random_cells(5, 5, rng);
  const FeatureImage base = compute_features(cg, cell_energy(cg));

  for (const int k : {1, 5, 9, 13}) {
    CellGrid rot = cg;
    for (int cy = 0; cy < 5; ++cy) {
      for (int cx = 0; cx < 5; ++cx) {
        for (int d = 0; d < 18; ++d) rot.cell(cx, cy)[(d + k) % 18] = cg.cell(cx, cy)[d];
      }
    }
    const FeatureImage moved = compute_features(rot, cell_energy(rot));
    for (int cy = 0; cy < 5; ++cy) {
      for (int cx = 0; cx < 5; ++cx) {
        const double* a = base.cell(cx, cy);
        const double* b = moved.cell(cx, cy);
        for (int d = 0; d < 18; ++d)
          CHECK(b[(d + k) % 18] == doctest::Approx(a[d]).epsilon(1e-9));
        for (int u = 0; u < 9; ++u)
          CHECK(b[18 + (u + k) % 9] == doctest::Approx(a[18 + u]).epsilon(1e-9));
        for (int t = 27; t < 31; ++t) CHECK(b[t] == doctest::Approx(a[t]).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("feature extraction is deterministic") {
  std::mt19937_64 rng(24);
  const GrayImage img = testutil::random_image(40, 32, rng);
  const FeatureImage a = extract_features(img);
  const FeatureImage b = extract_features(img);
  CHECK(a.values == b.values);
}
