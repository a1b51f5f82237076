#include <doctest.h>

#include <cmath>
#include <random>

#include "mtmc/correlation.hpp"
#include "mtmc/synth.hpp"

using namespace mtmc;

namespace {

std::vector<TimedPoint> line(std::int64_t first, int count, double x0, double y0, double vx, double vy, int fps) {
  std::vector<TimedPoint> out;
  for (int i = 0; i < count; ++i) {
    std::int64_t f = first + i;
    double t = static_cast<double>(f) / fps;
    out.push_back({f, {x0 + vx * t, y0 + vy * t}});
  }
  return out;
}

}  // namespace

TEST_CASE("appearance calibration examples") {
  EmbeddingSet e;
  e.rows.resize(4, 1);
  e.rows << 0.0f, 0.0f, 2.0f, 2.0f;
  e.identity = {0, 0, 1, 1};
  auto c = calibrate_appearance(e, 1000, 1);
  CHECK(c.mu_p == 0.0);
  CHECK(c.mu_n == doctest::Approx(2.0));
  CHECK(c.t_a == doctest::Approx(1.0));
  CHECK(AppearanceCalibration::from_means(0.4, 1.2).t_a == doctest::Approx(0.8));
  CHECK_THROWS_AS(AppearanceCalibration::from_means(1.0, 1.0), DataError);

  EmbeddingSet one = e;
  one.identity = {0, 0, 0, 0};
  CHECK_THROWS_AS(calibrate_appearance(one, 10, 1), DataError);
  EmbeddingSet inverted = e;
  inverted.identity = {0, 1, 0, 1};
  CHECK_THROWS_AS(calibrate_appearance(inverted, 10, 1), DataError);
}

TEST_CASE("sampled calibration equals exhaustive means when pairs fit") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  EmbeddingSet e;
  e.rows.resize(50, 3);
  for (int i = 0; i < 50; ++i) {
    e.identity.push_back(i % 5);
    for (int k = 0; k < 3; ++k) e.rows(i, k) = static_cast<float>(normal(rng) + (i % 5) * (k == 0 ? 2.0 : 0.0));
  }
  double sp = 0, sn = 0;
  int np = 0, nn = 0;
  for (int i = 0; i < 50; ++i)
    for (int j = i + 1; j < 50; ++j) {
      double d = (e.rows.row(i).cast<double>() - e.rows.row(j).cast<double>()).norm();
      if (e.identity[i] == e.identity[j]) sp += d, ++np;
      else sn += d, ++nn;
    }
  auto c = calibrate_appearance(e, 100000, 9);
  CHECK(c.mu_p == doctest::Approx(sp / np).epsilon(1e-12));
  CHECK(c.mu_n == doctest::Approx(sn / nn).epsilon(1e-12));
  // Subsampled estimates stay close.
  auto s = calibrate_appearance(e, 200, 9);
  CHECK(s.mu_p == doctest::Approx(sp / np).epsilon(0.1));
}

TEST_CASE("appearance correlation examples") {
  AppearanceCalibration c{0.0, 0.0, 0.8};
  CHECK(appearance_correlation(0.0, c) == 1.0);
  CHECK(appearance_correlation(0.8, c) == 0.0);
  CHECK(appearance_correlation(1.6, c) == doctest::Approx(-1.0));
  CHECK(appearance_correlation(0.3, c) > appearance_correlation(0.31, c));
}

TEST_CASE("motion error examples") {
  auto all = line(0, 200, 1.0, 2.0, 1.2, -0.3, 60);
  std::vector<TimedPoint> a(all.begin(), all.begin() + 50), b(all.begin() + 130, all.end());
  auto e = motion_error(a, b, 60, 7.0);
  CHECK(!e.impossible);
  CHECK(e.error == doctest::Approx(0.0).epsilon(1e-9));

  std::vector<TimedPoint> s1{{0, {0, 0}}, {1, {0, 0}}}, s2{{61, {5, 0}}, {62, {5, 0}}};
  CHECK(motion_error(s1, s2, 60, 3.0).impossible);
  CHECK_THROWS_AS(motion_error(s2, s1, 60, 3.0), DataError);
}

TEST_CASE("motion error matches hand extrapolation") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    double vx1 = u(rng), vy1 = u(rng), vx2 = u(rng), vy2 = u(rng);
    int len1 = 2 + trial % 90, len2 = 2 + (trial * 7) % 90;
    auto a = line(0, len1, u(rng), u(rng), vx1, vy1, 60);
    std::int64_t start = len1 + 30 + trial;
    auto b = line(start, len2, u(rng) + 3.0, u(rng), vx2, vy2, 60);
    // Exact lines, so the least-squares fits recover the velocities.
    double t_end = static_cast<double>(a.back().frame) / 60, t_start = static_cast<double>(b.front().frame) / 60;
    WorldPoint fwd{a.back().world.x + vx1 * (t_start - t_end), a.back().world.y + vy1 * (t_start - t_end)};
    WorldPoint bwd{b.front().world.x - vx2 * (t_start - t_end), b.front().world.y - vy2 * (t_start - t_end)};
    double expect = distance(fwd, b.front().world) + distance(bwd, a.back().world);
    auto e = motion_error(a, b, 60, 1e6);
    CHECK(e.error == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("fit window uses at most one second of points") {
  // A turn long before the last second does not affect the forward prediction.
  auto early = line(0, 100, 0.0, 0.0, -1.0, 0.0, 60);
  auto late = line(100, 60, early.back().world.x, 0.0, 1.0, 0.0, 60);
  for (auto& p : late) p.world.x = early.back().world.x + 1.0 * (static_cast<double>(p.frame - 99) / 60);
  std::vector<TimedPoint> a = early;
  a.insert(a.end(), late.begin(), late.end());
  auto b = line(300, 10, 0.0, 0.0, 1.0, 0.0, 60);
  for (auto& p : b) p.world.x = a.back().world.x + 1.0 * (static_cast<double>(p.frame - a.back().frame) / 60);
  CHECK(motion_error(a, b, 60, 7.0).error == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("motion correlation and decay") {
  MotionParams p{2.0, 0.5, 7.0, 0.1};
  CHECK(*motion_correlation({false, 2.0}, p) == 0.0);
  CHECK(*motion_correlation({false, 0.0}, p) == doctest::Approx(1.0));
  CHECK(!motion_correlation({true, 0.0}, p).has_value());
  CHECK(decay_factor(0.0, 0.3) == 1.0);
  CHECK(decay_factor(10.0, 0.1) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK(decay_factor(50.0, 0.0) == 1.0);
  CHECK(decay_factor(2.0, 0.2) <= decay_factor(1.0, 0.2));
  MotionParams bad = p;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("combine examples") {
  CorrelationMatrix a(3), m(3);
  a.set(0, 1, 0.6);
  m.set(0, 1, 0.4);
  a.set(0, 2, 0.5);
  m.forbid(0, 2);
  a.set(1, 2, -0.2);
  m.set(1, 2, 0.1);
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(3, 3);
  d(0, 1) = d(1, 0) = 0.5;
  d(0, 2) = d(2, 0) = 0.0;
  auto w = combine(a, m, d);
  CHECK(w.value(0, 1) == doctest::Approx(0.5));
  CHECK(w.value(1, 0) == doctest::Approx(0.5));
  CHECK(w.forbidden(0, 2));
  CHECK(w.forbidden(2, 0));
  CHECK(w.value(1, 2) == doctest::Approx(-0.1));
  CHECK_THROWS_AS(combine(a, CorrelationMatrix(2), d), DataError);
  CHECK(w.to_text().find('F') != std::string::npos);
}

TEST_CASE("correlation parts are symmetric and honor the speed limit") {
  std::vector<Fragment> f(3);
  f[0].points = line(0, 30, 0, 0, 1, 0, 60);
  f[1].points = line(60, 30, 0, 0, 1, 0, 60);
  f[2].points = line(40, 30, 50, 0, 0, 0, 60);  // overlaps both and sits far away
  EmbeddingMatrix emb(3, 2);
  emb << 1, 0, 1, 0, 0, 1;
  for (std::size_t i = 0; i < 3; ++i) f[i].appearance_rows = {i};
  auto parts = correlation_parts(f, emb, {0, 0, 1.0}, {1.0, 0.5, 7.0, 0.2}, 60, 2);
  auto w = build_correlation(f, emb, {0, 0, 1.0}, {1.0, 0.5, 7.0, 0.2}, 60, 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i == j) continue;
      CHECK(w.forbidden(i, j) == w.forbidden(j, i));
      if (!w.forbidden(i, j)) CHECK(w.value(i, j) == w.value(j, i));
      CHECK(parts.decay(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) ==
            parts.decay(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
    }
  CHECK(!w.forbidden(0, 1));
  CHECK(w.value(0, 1) > 0.0);
  CHECK(w.forbidden(0, 2));
  CHECK(w.forbidden(1, 2));
  // Same line, half a second apart: perfect motion and appearance.
  CHECK(w.value(0, 1) == doctest::Approx((1.0 + 0.5) * std::exp(-0.2 * 31.0 / 60.0)));
}

TEST_CASE("representative positions") {
  CHECK(representative_positions(3) == std::vector<std::size_t>{0, 1, 2});
  auto r = representative_positions(100, 8);
  CHECK(r.size() == 8u);
  CHECK(r.front() == 0u);
  CHECK(r.back() == 99u);
  CHECK(representative_positions(0).empty());
}

TEST_CASE("motion parameter selection") {
  std::vector<MotionParams> grid{{1, 0.1, 7, 0.1}, {2, 0.1, 7, 0.1}, {3, 0.1, 7, 0.1}};
  CHECK(select_motion_params(std::span(grid).first(1), [](const MotionParams&) { return 0.0; }) == grid[0]);
  CHECK(select_motion_params(grid, [](const MotionParams& p) { return p.t_m == 1 || p.t_m == 3 ? 0.9 : 0.5; }) == grid[0]);
  CHECK(select_motion_params(grid, [](const MotionParams& p) { return -std::abs(p.t_m - 2.0); }) == grid[1]);
  CHECK_THROWS_AS(select_motion_params({}, [](const MotionParams&) { return 0.0; }), DataError);
}

TEST_CASE("calibration recovers the closed-form threshold on synthetic embeddings") {
  // Unit-norm means in 128 dims and spread 1/32 put mu_n/mu_p near 3.
  WorldSpec world;
  world.duration_s = 20;
  world.seed = 3;
  NoiseSpec noise;
  noise.sigma = 0.03125;
  auto obs = degrade(generate_world(world), world, noise, 3);
  auto c = calibrate_appearance(labeled_rows(obs.embeddings, obs.labels), 20000, 1);
  const double k = noise.dim;
  // E||x - y|| for two draws around one mean, and around two orthogonal-ish unit means.
  double chi_mean = std::sqrt(2.0) * std::tgamma((k + 1) / 2) / std::tgamma(k / 2);
  double mu_p = noise.sigma * std::sqrt(2.0) * chi_mean;
  double mu_n = std::sqrt(2.0 + 2.0 * k * noise.sigma * noise.sigma);
  CHECK(c.mu_n / c.mu_p == doctest::Approx(3.0).epsilon(0.1));
  CHECK(c.t_a == doctest::Approx((mu_p + mu_n) / 2).epsilon(0.05));
}
