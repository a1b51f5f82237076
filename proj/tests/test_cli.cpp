#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "mtmc/model.hpp"

using namespace mtmc;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::filesystem::path scratch() {
  auto dir = std::filesystem::temp_directory_path() / "mtmc_cli_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run({"--help"}).code == 0);
  Run none = run({});
  CHECK(none.code == 1);
  Run unknown = run({"frobnicate"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("error:") != std::string::npos);
  CHECK(run({"track", "--detections", "/nonexistent/d.txt"}).code == 1);
}

TEST_CASE("data errors exit with two") {
  auto dir = scratch();
  write(dir / "bad.txt", "0,1,2\n");
  write(dir / "emb.bin", "EMB1");
  Run r = run({"track", "--detections", (dir / "bad.txt").string(), "--embeddings", (dir / "emb.bin").string(), "--out",
               (dir / "o.txt").string()});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("evaluate identical files") {
  auto dir = scratch();
  write(dir / "gt.txt", "0,1,0,0,0,10,20,0,0\n0,1,1,0,0,10,20,0,0\n1,2,0,5,5,10,20,9,9\n");
  Run r = run({"evaluate", "--truth", (dir / "gt.txt").string(), "--computed", (dir / "gt.txt").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("IDF1=1.0000") != std::string::npos);
  Run csv = run({"evaluate", "--truth", (dir / "gt.txt").string(), "--computed", (dir / "gt.txt").string(), "--csv"});
  CHECK(csv.out.rfind("idf1,", 0) == 0);
}

TEST_CASE("generate, degrade, track and evaluate end to end") {
  auto dir = scratch();
  write(dir / "world.cfg", "identity_count=4\nduration_s=40\nseed=3\n");
  write(dir / "noise.cfg", "sigma=0.05\n");
  write(dir / "track.cfg", "camera_count=4\nalpha=0.05\nbeta=0.3\nt_m=3\n");
  auto p = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(run({"generate", "--world", p("world.cfg"), "--truth", p("gt.txt")}).code == 0);
  REQUIRE(run({"--seed", "4", "degrade", "--world", p("world.cfg"), "--noise", p("noise.cfg"), "--truth", p("gt.txt"), "--detections",
               p("det.txt"), "--embeddings", p("emb.bin"), "--labels", p("labels.txt")})
              .code == 0);
  Run cal = run({"--config", p("track.cfg"), "calibrate", "--embeddings", p("emb.bin"), "--labels", p("labels.txt"), "--out",
                 p("calibrated.cfg")});
  REQUIRE(cal.code == 0);
  CHECK(cal.out.find("t_a=") != std::string::npos);
  Run tr = run({"--config", p("calibrated.cfg"), "--threads", "2", "track", "--detections", p("det.txt"), "--embeddings", p("emb.bin"),
                "--out", p("tracks.txt"), "--log", p("log.txt")});
  REQUIRE(tr.code == 0);
  Run ev = run({"evaluate", "--truth", p("gt.txt"), "--computed", p("tracks.txt")});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("IDF1=") != std::string::npos);
  CHECK(read_text_file(p("log.txt")).find("level=3") != std::string::npos);
  Run rk = run({"--config", p("calibrated.cfg"), "rank", "--embeddings", p("emb.bin"), "--labels", p("labels.txt"), "--detections",
                p("det.txt")});
  CHECK(rk.code == 0);
  CHECK(rk.out.find("rank1=") != std::string::npos);
}

TEST_CASE("loss demo prints one line per scheme") {
  auto dir = scratch();
  Run r = run({"--seed", "1", "loss-demo", "--iterations", "20", "--identities", "6", "--samples", "8", "--out",
               (dir / "trace.txt").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("uniform_rank1=") != std::string::npos);
  CHECK(r.out.find("batch_hard_rank1=") != std::string::npos);
  CHECK(r.out.find("adaptive_rank1=") != std::string::npos);
  CHECK(run({"loss-demo", "--kind", "manhattan", "--out", (dir / "t.txt").string()}).code != 0);
}
