#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mtmc/model.hpp"

namespace mtmc {

/// A straight corridor of camera regions laid out along x, separated by
/// blind-spot gaps. Identities walk with piecewise-constant velocity and only
/// turn inside the interior of a region (at least `edge_margin` meters from
/// any edge that borders a gap).
struct WorldSpec {
  int camera_count = 4;
  int identity_count = 20;
  double duration_s = 60.0;
  int fps = 60;
  double region_width = 20.0;   // meters along x
  double region_height = 10.0;  // meters along y, shared by the corridor
  double gap_width = 8.0;
  double edge_margin = 3.0;
  double speed_min = 0.8;
  double speed_max = 1.6;
  double speed_limit = 7.0;
  double turn_rate = 0.02;  // expected turns per second spent inside a region interior
  double reverse_probability = 0.25;  // chance a turn also reverses the x direction
  double gap_turn_rate = 0.2;  // unobserved speed/heading changes per second inside a gap; never reverses
  double max_heading_deg = 20.0;
  std::uint64_t seed = 0;

  double corridor_length() const;
  double region_start(int camera) const;
  /// Camera whose region contains x, or -1 inside a gap.
  int camera_at(double x) const;
  void validate() const;
};

WorldSpec parse_world_spec(const std::string& text, WorldSpec base = {});

struct NoiseSpec {
  int dim = 128;
  double sigma = 0.0;             // isotropic embedding spread
  double outlier_fraction = 0.0;  // embeddings drawn around another identity's mean
  double miss_rate = 0.0;
  double false_positive_rate = 0.0;  // per camera-frame chance of a clutter burst
  double box_sigma = 0.0;            // pixels
  void validate() const;
};

NoiseSpec parse_noise_spec(const std::string& text, NoiseSpec base = {});

/// Both specs may live in one key=value file; keys of the other spec are skipped.
void load_specs(const std::filesystem::path& path, WorldSpec* world, NoiseSpec* noise);

constexpr double kImageWidth = 1920.0;
constexpr double kImageHeight = 1080.0;
constexpr double kBoxWidth = 60.0;
constexpr double kBoxHeight = 150.0;

/// Image box whose foot point is the projection of `world` into `camera`.
Box project_box(const WorldSpec& spec, int camera, const WorldPoint& world);

std::vector<Trajectory> generate_world(const WorldSpec& spec);

struct Observations {
  std::vector<Detection> detections;  // sorted by (camera, frame); embedding_index = position
  EmbeddingSet embeddings;            // unlabeled, one row per detection
  std::vector<int> labels;            // true identity per detection, -1 for clutter
  std::vector<Trajectory> truth;      // passed through unchanged
};

/// Identity means on the unit sphere drawn from `seed`; identical for every
/// NoiseSpec sharing dim, so sweeping sigma keeps the same identities.
EmbeddingMatrix identity_means(int identity_count, int dim, std::uint64_t seed);

Observations degrade(const std::vector<Trajectory>& truth, const WorldSpec& world, const NoiseSpec& noise, std::uint64_t seed);

/// Rows with a non-negative label, labeled; used for appearance calibration.
EmbeddingSet labeled_rows(const EmbeddingSet& embeddings, const std::vector<int>& labels);

/// Labeled point clouds for metric-learning experiments: `signal_dim`
/// coordinates carry the identity, the rest are nuisance noise.
struct ClusterSpec {
  int identity_count = 20;
  int samples_per_identity = 48;
  int input_dim = 32;
  int signal_dim = 8;
  double signal_spread = 0.25;
  double nuisance_sigma = 1.0;
  double label_noise = 0.0;  // fraction of rows relabeled to a random other identity
  std::uint64_t seed = 0;
};

struct ClusterData {
  EmbeddingSet data;             // labels after label noise
  std::vector<int> true_labels;  // before label noise
};

/// Centers depend only on (identity_count, signal_dim, center_seed) so train
/// and held-out draws can share identities.
ClusterData make_clusters(const ClusterSpec& spec, std::uint64_t center_seed);

}  // namespace mtmc
