#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mtmc/model.hpp"

using namespace mtmc;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "mtmc_model_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("seconds_to_frames rounds half up") {
  CHECK(seconds_to_frames(1.0, 60) == 60);
  CHECK(seconds_to_frames(0.5, 60) == 30);
  CHECK(seconds_to_frames(1.0 / 120.0, 60) == 1);
  CHECK(seconds_to_frames(90.0, 60) == 5400);
}

TEST_CASE("config text round trip and overrides") {
  ScenarioConfig c = parse_config_text("# comment\nfps=30\n\ncamera_count=3\nt_a=0.8\nseed=7\n");
  CHECK(c.fps == 30);
  CHECK(c.camera_count == 3);
  CHECK(c.t_a == 0.8);
  CHECK(c.seed == 7);
  CHECK(c.min_length_frames() == 15);
  ScenarioConfig back = parse_config_text(format_config(c));
  CHECK(back.fps == c.fps);
  CHECK(back.t_a == c.t_a);
  CHECK(back.window_mc_s == c.window_mc_s);
  CHECK_THROWS_AS(parse_config_text("bogus=1\n"), DataError);
  CHECK_THROWS_AS(parse_config_text("fps\n"), DataError);
  CHECK_THROWS_AS(parse_config_text("fps=abc\n"), DataError);
}

TEST_CASE("config validation rejects bad windows and motion") {
  ScenarioConfig c;
  c.window_sc_s = 0.5;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = ScenarioConfig{};
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = ScenarioConfig{};
  c.overlap_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), DataError);
  CHECK_NOTHROW(ScenarioConfig{}.validate());
}

TEST_CASE("detections parse with line-order embedding rows") {
  auto d = parse_detections_text("# header\n1,5,10,20,30,40,1.5,2.5\n0,7,1,2,3,4,0,0\n");
  REQUIRE(d.size() == 2);
  // Sorted by camera then frame; embedding_index keeps the data-line number.
  CHECK(d[0].camera == 0);
  CHECK(d[0].embedding_index == 1u);
  CHECK(d[1].camera == 1);
  CHECK(d[1].frame == 5);
  CHECK(d[1].box.width == 30.0);
  CHECK(d[1].world.y == 2.5);
  CHECK(d[1].embedding_index == 0u);
  CHECK_THROWS_AS(parse_detections_text("1,2,3\n"), DataError);
  CHECK_THROWS_AS(parse_detections_text("-1,0,0,0,1,1,0,0\n"), DataError);
  CHECK_THROWS_AS(parse_detections_text("0,0,0,0,0,1,0,0\n"), DataError);
  CHECK(parse_detections_text("").empty());
}

TEST_CASE("detection file round trip is exact") {
  std::vector<Detection> in(2);
  in[0] = {0, 3, {0.1, 0.2, 10.0 / 3.0, 5.0}, {1.0 / 7.0, 2.0}, 0, false};
  in[1] = {2, 9, {5.0, 6.0, 7.0, 8.0}, {-1.0, 1e-9}, 1, false};
  auto path = scratch("det.txt");
  write_detections(in, path);
  auto out = parse_detections(path, 60);
  CHECK(out == in);
}

TEST_CASE("embedding binary round trip and corruption") {
  EmbeddingSet e;
  e.rows.resize(3, 2);
  e.rows << 1.0f, -2.0f, 0.5f, 1e-7f, 3.25f, 0.0f;
  auto path = scratch("emb.bin");
  write_embeddings(e, path);
  auto back = read_embeddings(path);
  CHECK(back.rows == e.rows);
  CHECK(std::filesystem::file_size(path) == 12u + 4u * 6u);

  auto bad = scratch("bad.bin");
  {
    std::ofstream f(bad, std::ios::binary);
    f << "NOPE";
  }
  CHECK_THROWS_AS(read_embeddings(bad), DataError);
  {
    std::ofstream f(bad, std::ios::binary);
    std::ifstream src(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(src)), std::istreambuf_iterator<char>());
    f << bytes.substr(0, bytes.size() - 1);
  }
  CHECK_THROWS_AS(read_embeddings(bad), DataError);
}

TEST_CASE("labels allow clutter but labeled sets do not") {
  auto path = scratch("labels.txt");
  write_labels({3, -1, 0}, path);
  CHECK(read_labels(path) == std::vector<int>{3, -1, 0});
  EmbeddingSet e;
  e.rows = EmbeddingMatrix::Zero(2, 2);
  e.identity = {0, -1};
  CHECK_THROWS_AS(e.validate(), DataError);
  e.identity = {0};
  CHECK_THROWS_AS(e.validate(), DataError);
  e.identity = {0, 1};
  CHECK_NOTHROW(e.validate());
}

TEST_CASE("ground truth groups by identity and round trips") {
  std::string text = "0,4,1,0,0,10,20,1,1\n0,2,0,0,0,10,20,0,0\n1,4,5,0,0,10,20,9,9\n0,4,0,0,0,10,20,0,1\n";
  auto t = parse_ground_truth_text(text);
  REQUIRE(t.size() == 2);
  CHECK(t[0].identity == 2);
  CHECK(t[1].identity == 4);
  REQUIRE(t[1].detections.size() == 3);
  CHECK(t[1].detections[0].frame == 0);
  CHECK(t[1].detections[2].camera == 1);
  CHECK(t[1].cameras() == std::set<int>{0, 1});
  auto again = parse_ground_truth_text(format_trajectories(t));
  REQUIRE(again.size() == t.size());
  CHECK(again[1].detections.size() == 3);
  CHECK(again[1].detections[0].world == t[1].detections[0].world);
  CHECK_THROWS_AS(parse_ground_truth_text("0,1,0,0,0,10,20,0,0\n0,1,0,0,0,10,20,0,0\n"), DataError);
}

TEST_CASE("format_real is shortest round trip") {
  CHECK(format_real(0.1) == "0.1");
  CHECK(format_real(2.0) == "2");
  double x = 1.0 / 3.0;
  CHECK(std::stod(format_real(x)) == x);
}
