#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mtmc {

/// Raised for malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Box {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  bool operator==(const Box&) const = default;
};

/// Ground-plane position in meters.
struct WorldPoint {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const WorldPoint&) const = default;
};

double distance(const WorldPoint& a, const WorldPoint& b);

struct Detection {
  int camera = 0;
  std::int64_t frame = 0;
  Box box;
  WorldPoint world;
  std::optional<std::size_t> embedding_index;
  // Set on detections synthesized by interpolation; never serialized.
  bool interpolated = false;

  bool operator==(const Detection&) const = default;
};

using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingSet {
  EmbeddingMatrix rows;
  std::vector<int> identity;  // empty unless labeled

  std::size_t count() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
  bool labeled() const { return !identity.empty(); }

  /// Throws DataError unless rows are finite and labels (if any) cover every row.
  void validate() const;
};

struct Trajectory {
  int identity = 0;
  std::vector<Detection> detections;  // ordered by (frame, camera)

  std::set<int> cameras() const;
};

/// Throws DataError when a trajectory is empty or repeats a frame within one camera.
void validate_trajectory(const Trajectory& trajectory);

/// Tracker and training parameters. Durations are in seconds; see seconds_to_frames.
struct ScenarioConfig {
  int fps = 60;
  int camera_count = 1;
  double window_tracklet_s = 1.0;
  double window_sc_s = 10.0;
  double window_mc_s = 90.0;
  double overlap_fraction = 0.5;

  double alpha = 0.5;
  double beta = 0.05;
  double t_m = 1.0;
  double t_a = 1.0;
  double speed_limit = 7.0;

  double margin = 1.0;
  int P = 18;
  int K = 4;
  int H = 50;

  // Negative means "fps / 2".
  int pruning_min_length = -1;
  int exact_limit = 12;
  std::uint64_t seed = 0;
  int threads = 1;

  int min_length_frames() const { return pruning_min_length < 0 ? fps / 2 : pruning_min_length; }
  void validate() const;
};

/// Round half up to whole frames.
std::int64_t seconds_to_frames(double seconds, int fps);

/// Applies "key=value" lines (blank and '#' lines ignored) on top of `base`.
ScenarioConfig parse_config_text(const std::string& text, ScenarioConfig base = {});
ScenarioConfig load_config(const std::filesystem::path& path, ScenarioConfig base = {});
std::string format_config(const ScenarioConfig& config);

/// Generic key=value reader shared by the synthetic-world configs.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Detection files: camera_id,frame,x,y,w,h,wx,wy per line.
// embedding_index is the zero-based data-line number.
std::vector<Detection> parse_detections(const std::filesystem::path& path, int fps);
std::vector<Detection> parse_detections_text(const std::string& text);
void write_detections(const std::vector<Detection>& detections, const std::filesystem::path& path);

// Embedding files: "EMB1", u32 count, u32 dim, count*dim f32, all little-endian.
EmbeddingSet read_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingSet& embeddings, const std::filesystem::path& path);

// Label files: one integer per line, row-aligned with an embedding file; -1 marks clutter.
std::vector<int> read_labels(const std::filesystem::path& path);
void write_labels(const std::vector<int>& labels, const std::filesystem::path& path);

// Trajectory / ground-truth files: camera_id,identity,frame,x,y,w,h,wx,wy per line.
std::vector<Trajectory> parse_ground_truth(const std::filesystem::path& path);
std::vector<Trajectory> parse_ground_truth_text(const std::string& text);
void write_trajectories(const std::vector<Trajectory>& trajectories, const std::filesystem::path& path);
std::string format_trajectories(const std::vector<Trajectory>& trajectories);

/// Shortest decimal form that parses back to the same double.
std::string format_real(double value);

}  // namespace mtmc
