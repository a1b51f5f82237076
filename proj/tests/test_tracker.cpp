#include <doctest.h>

#include <limits>

#include "mtmc/evalkit.hpp"
#include "mtmc/synth.hpp"
#include "mtmc/tracker.hpp"

using namespace mtmc;

namespace {

ScenarioConfig corridor_config(int cameras) {
  ScenarioConfig c;
  c.fps = 60;
  c.camera_count = cameras;
  c.alpha = 0.05;
  c.beta = 0.3;
  c.t_m = 3.0;
  return c;
}

struct Scene {
  std::vector<Trajectory> truth;
  Observations obs;
  ScenarioConfig config;
};

Scene small_world(double sigma, double miss, std::uint64_t seed) {
  WorldSpec world;
  world.identity_count = 6;
  world.duration_s = 20;
  world.seed = seed;
  NoiseSpec noise;
  noise.sigma = sigma;
  noise.miss_rate = miss;
  Scene s;
  s.truth = generate_world(world);
  s.obs = degrade(s.truth, world, noise, seed + 1);
  s.config = corridor_config(world.camera_count);
  s.config.t_a = calibrate_appearance(labeled_rows(s.obs.embeddings, s.obs.labels), 20000, 1).t_a;
  return s;
}

Detection det(int camera, std::int64_t frame, double x) {
  return {camera, frame, {x, 0.0, 10.0, 20.0}, {x / 10.0, 1.0}, std::nullopt, false};
}

}  // namespace

TEST_CASE("window plans") {
  ScenarioConfig c;
  auto l1 = window_plan(Level::tracklet, c);
  CHECK(l1.width == 60);
  CHECK(l1.stride == 60);
  CHECK(l1.disjoint);
  auto l2 = window_plan(Level::single_camera, c);
  CHECK(l2.width == 600);
  CHECK(l2.stride == 300);
  CHECK(!l2.disjoint);
  CHECK(window_plan(Level::multi_camera, c).width == 5400);

  auto w = plan_windows(l1, 0, 130);
  REQUIRE(w.size() == 3u);
  CHECK(w[0] == std::pair<std::int64_t, std::int64_t>{0, 60});
  CHECK(w[2] == std::pair<std::int64_t, std::int64_t>{120, 180});
  auto o = plan_windows(l2, 650, 700);
  REQUIRE(o.size() == 2u);
  CHECK(o[0].first == 300);
  CHECK(o[1].first == 600);
  CHECK(plan_windows(l2, 5, 4).empty());
}

TEST_CASE("interpolation fills short gaps only") {
  Trajectory t{3, {det(0, 0, 0), det(0, 4, 40), det(0, 100, 50), det(1, 2, 0)}};
  auto out = interpolate(t, 60);
  CHECK(out.identity == 3);
  CHECK(out.detections.size() == 7u);
  int filled = 0;
  for (const auto& d : out.detections)
    if (d.interpolated) {
      ++filled;
      CHECK(d.camera == 0);
      CHECK(d.box.x == doctest::Approx(10.0 * static_cast<double>(d.frame)));
    }
  CHECK(filled == 3);
  for (std::size_t k = 1; k < out.detections.size(); ++k) CHECK(out.detections[k - 1].frame <= out.detections[k].frame);
}

TEST_CASE("pruning counts original detections per camera") {
  Trajectory a{0, {det(0, 0, 0), det(0, 1, 0), det(1, 5, 0)}};
  Trajectory b{1, {det(0, 0, 0), det(1, 1, 0)}};
  Trajectory c{2, {det(0, 0, 0), det(0, 1, 0), det(0, 2, 0)}};
  c.detections[1].interpolated = true;
  auto kept = prune({a, b, c}, 2);
  REQUIRE(kept.size() == 2u);
  CHECK(kept[0].identity == 0);
  CHECK(kept[1].identity == 2);
  CHECK(prune({a, b, c}, 3).empty());
  c.detections[1].interpolated = false;
  CHECK(prune({a, b, c}, 3).size() == 1u);
  CHECK(prune({a, b, c}, 0).size() == 3u);
}

TEST_CASE("tracker rejects inconsistent input") {
  std::vector<Detection> d{det(0, 0, 0)};
  d[0].embedding_index = 0;
  EmbeddingMatrix e = EmbeddingMatrix::Zero(1, 4);
  ScenarioConfig c = corridor_config(1);
  CHECK_NOTHROW(Tracker(d, e, c));
  CHECK_THROWS_AS(Tracker(d, EmbeddingMatrix::Zero(0, 4), c), DataError);
  d[0].camera = 3;
  CHECK_THROWS_AS(Tracker(d, e, c), DataError);
  d[0].camera = 0;
  e(0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(Tracker(d, e, c), DataError);

  std::vector<Detection> two{det(0, 0, 0), det(0, 1, 0)};
  two[0].embedding_index = 0;
  two[1].embedding_index = 1;
  Tracker t(two, EmbeddingMatrix::Zero(2, 4), c);
  CHECK_THROWS_AS(t.add_entity({0, 0}), DataError);
  CHECK_THROWS_AS(t.add_entity({}), DataError);
  CHECK_THROWS_AS(t.add_entity({7}), DataError);
}

TEST_CASE("empty input produces no trajectories") {
  CHECK(run_pipeline({}, EmbeddingMatrix::Zero(0, 8), corridor_config(2)).empty());
}

TEST_CASE("noiseless small world is tracked perfectly") {
  Scene s = small_world(0.03, 0.0, 4);
  std::vector<std::string> log;
  auto computed = run_pipeline(s.obs.detections, s.obs.embeddings.rows, s.config, [&](const std::string& l) { log.push_back(l); });
  CHECK(id_measures(s.truth, computed).idf1 == 1.0);
  CHECK(!log.empty());
  for (const auto& t : computed) validate_trajectory(t);
}

TEST_CASE("pipeline output is deterministic across thread counts") {
  Scene s = small_world(0.1, 0.1, 9);
  ScenarioConfig one = s.config, many = s.config;
  one.threads = 1;
  many.threads = 6;
  std::string log1, log6;
  auto a = run_pipeline(s.obs.detections, s.obs.embeddings.rows, one, [&](const std::string& l) { log1 += l + '\n'; });
  auto b = run_pipeline(s.obs.detections, s.obs.embeddings.rows, many, [&](const std::string& l) { log6 += l + '\n'; });
  CHECK(format_trajectories(a) == format_trajectories(b));
  CHECK(log1 == log6);
  CHECK(id_measures(s.truth, a).idf1 > 0.8);
}

TEST_CASE("tracklets never hold two detections of one frame") {
  Scene s = small_world(0.15, 0.0, 2);
  Tracker t(s.obs.detections, s.obs.embeddings.rows, s.config);
  t.run_tracklets();
  for (const auto& tr : t.trajectories()) validate_trajectory(tr);
  std::size_t tracklets = t.entity_count();
  t.run_single_camera();
  CHECK(t.entity_count() <= tracklets);
  t.run_multi_camera();
  for (const auto& tr : t.trajectories()) validate_trajectory(tr);
}

namespace {

// Straight walk at `speed` m/s along x on `camera`, one detection per frame in [first, last).
void walk(std::vector<Detection>& out, int camera, std::int64_t first, std::int64_t last, double x0, double y, double speed, int fps) {
  for (std::int64_t f = first; f < last; ++f) {
    double x = x0 + speed * static_cast<double>(f - first) / fps;
    Detection d{camera, f, {100.0 * x, 10.0 * y, 60.0, 150.0}, {x, y}, out.size(), false};
    out.push_back(d);
  }
}

EmbeddingMatrix constant_rows(std::size_t n, const std::vector<int>& identity_of_row) {
  EmbeddingMatrix e = EmbeddingMatrix::Zero(static_cast<Eigen::Index>(n), 4);
  for (std::size_t i = 0; i < n; ++i) e(static_cast<Eigen::Index>(i), identity_of_row[i] % 4) = 1.0f;
  return e;
}

}  // namespace

TEST_CASE("tracklet stage examples") {
  ScenarioConfig c = corridor_config(1);
  std::vector<Detection> d;
  walk(d, 0, 0, 60, 0.0, 1.0, 0.0, 60);
  walk(d, 0, 0, 60, 9.0, 1.0, 0.0, 60);
  std::vector<int> ids(60, 0);
  ids.resize(120, 1);
  Tracker two(d, constant_rows(d.size(), ids), c);
  two.tracklet_stage(0, 0, 60);
  CHECK(two.entity_count() == 2u);

  std::vector<Detection> single;
  walk(single, 0, 5, 6, 0.0, 1.0, 0.0, 60);
  Tracker one(single, constant_rows(1, {0}), c);
  one.tracklet_stage(0, 0, 60);
  CHECK(one.entity_count() == 1u);

  // Same appearance, but 5 m in one frame.
  std::vector<Detection> jump;
  walk(jump, 0, 0, 1, 0.0, 1.0, 0.0, 60);
  walk(jump, 0, 1, 2, 5.0, 1.0, 0.0, 60);
  Tracker teleport(jump, constant_rows(2, {0, 0}), c);
  teleport.tracklet_stage(0, 0, 60);
  CHECK(teleport.entity_count() == 2u);
}

TEST_CASE("single identity with a three second dropout stays one trajectory") {
  ScenarioConfig c = corridor_config(1);
  std::vector<Detection> d;
  walk(d, 0, 0, 300, 0.0, 2.0, 1.0, 60);
  walk(d, 0, 480, 780, 8.0, 2.0, 1.0, 60);
  auto out = run_pipeline(d, constant_rows(d.size(), std::vector<int>(d.size(), 0)), c);
  CHECK(out.size() == 1u);
}

TEST_CASE("cross-camera association honors the speed limit") {
  ScenarioConfig c = corridor_config(2);
  SUBCASE("plausible transit joins") {
    std::vector<Detection> d;
    walk(d, 0, 0, 240, 0.0, 2.0, 1.0, 60);
    walk(d, 1, 720, 960, 12.0, 2.0, 1.0, 60);  // 8 s blind spot at 1 m/s
    auto out = run_pipeline(d, constant_rows(d.size(), std::vector<int>(d.size(), 0)), c);
    REQUIRE(out.size() == 1u);
    CHECK(out[0].cameras() == std::set<int>{0, 1});
  }
  SUBCASE("too fast a transit stays apart") {
    std::vector<Detection> d;
    walk(d, 0, 0, 240, 0.0, 2.0, 1.0, 60);
    walk(d, 1, 270, 510, 20.0, 2.0, 1.0, 60);  // 16 m in half a second
    auto out = run_pipeline(d, constant_rows(d.size(), std::vector<int>(d.size(), 0)), c);
    CHECK(out.size() == 2u);
  }
}
