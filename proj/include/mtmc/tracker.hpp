#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "mtmc/clustering.hpp"
#include "mtmc/correlation.hpp"
#include "mtmc/model.hpp"

namespace mtmc {

enum class Level { tracklet = 1, single_camera = 2, multi_camera = 3 };

struct WindowPlan {
  Level level = Level::tracklet;
  std::int64_t width = 0;   // frames
  std::int64_t stride = 0;  // frames
  bool disjoint = true;
};

WindowPlan window_plan(Level level, const ScenarioConfig& config);

/// Half-open [start, end) frame windows aligned to multiples of the stride
/// that intersect [first, last].
std::vector<std::pair<std::int64_t, std::int64_t>> plan_windows(const WindowPlan& plan, std::int64_t first, std::int64_t last);

using LogSink = std::function<void(const std::string&)>;

/// Holds every detection, the entities built from them so far, and the
/// multi-camera grouping of those entities. Entities are single-camera;
/// groups collect entities that share an identity across cameras.
class Tracker {
 public:
  Tracker(std::vector<Detection> detections, EmbeddingMatrix embeddings, ScenarioConfig config, LogSink log = {});

  /// Level 1: clusters detections of one camera in [start, end) into new tracklets.
  void tracklet_stage(int camera, std::int64_t start, std::int64_t end);
  /// Level 2: merges entities of one camera that have a detection in [start, end).
  void sc_trajectory_stage(int camera, std::int64_t start, std::int64_t end);
  /// Level 3: merges groups that have a detection in [start, end).
  void mc_trajectory_stage(std::int64_t start, std::int64_t end);

  void run_tracklets();
  void run_single_camera();
  void run_multi_camera();

  /// Registers a fixed single-camera entity (detection indices) with a fresh id.
  int add_entity(std::vector<std::size_t> detection_indices);

  /// One trajectory per group, identity = group id, without post-processing.
  std::vector<Trajectory> trajectories() const;

  std::size_t entity_count() const;
  const ScenarioConfig& config() const { return config_; }

 private:
  struct Entity {
    int id = 0;
    int camera = 0;
    int group = 0;
    bool alive = true;
    std::vector<std::size_t> members;  // detection indices ordered by frame
  };
  using Nodes = std::vector<std::vector<std::size_t>>;  // detection indices per node

  Nodes cluster_detections(int camera, std::int64_t start, std::int64_t end, int threads, std::string* line) const;
  void create_tracklets(int camera, const Nodes& clusters);
  void sc_stage(int camera, std::int64_t start, std::int64_t end, int threads, std::vector<std::string>& lines);
  Partition solve_nodes(const Nodes& nodes, std::uint64_t salt, int threads) const;
  Fragment fragment_of(const std::vector<std::size_t>& detection_indices) const;
  bool shares_slot(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const;
  bool has_detection_in(const std::vector<std::size_t>& members, std::int64_t start, std::int64_t end) const;
  std::vector<std::size_t> sorted_union(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const;
  int find_group(int group) const;
  void unite_groups(int a, int b);
  void emit(const std::string& line) const;
  std::vector<int> cameras() const;

  static std::string log_line(Level level, std::int64_t start, std::int64_t end, std::size_t nodes, int clusters);

  std::vector<Detection> detections_;
  EmbeddingMatrix embeddings_;
  ScenarioConfig config_;
  MotionParams motion_;
  AppearanceCalibration calibration_;
  LogSink log_;
  std::vector<std::vector<std::size_t>> by_camera_;  // detection indices per camera, by frame
  std::int64_t first_frame_ = 0;
  std::int64_t last_frame_ = -1;
  std::vector<Entity> entities_;
  mutable std::vector<int> parent_;  // union-find over group ids; the root is the smallest id
  mutable std::mutex groups_mutex_;
  int next_id_ = 0;
};

/// Fills per-camera gaps of at most one second by linear interpolation.
Trajectory interpolate(const Trajectory& trajectory, int fps);

/// Keeps trajectories with at least `min_length` original detections in some camera.
std::vector<Trajectory> prune(const std::vector<Trajectory>& trajectories, int min_length);

/// All three levels over the full timeline, then interpolation and pruning.
std::vector<Trajectory> run_pipeline(const std::vector<Detection>& detections, const EmbeddingMatrix& embeddings,
                                     const ScenarioConfig& config, LogSink log = {});

struct MotionCalibration {
  MotionParams best;
  std::vector<double> idf1;  // per grid point
};

/// Grid point whose pipeline run scores the highest IDF1 against `truth`.
MotionCalibration calibrate_motion(const std::vector<Detection>& detections, const EmbeddingMatrix& embeddings,
                                   const std::vector<Trajectory>& truth, std::span<const MotionParams> grid,
                                   const ScenarioConfig& config);

ScenarioConfig with_motion(ScenarioConfig config, const MotionParams& params);

}  // namespace mtmc
