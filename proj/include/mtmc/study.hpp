#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtmc/evalkit.hpp"
#include "mtmc/loss.hpp"
#include "mtmc/model.hpp"

namespace mtmc {

struct StudyOptions {
  std::size_t calibration_pairs = 20000;
  std::size_t sign_pairs = 20000;
  std::size_t max_queries = 300;
  int gallery_stride = 30;  // keep one labeled detection per identity every this many frames
  std::uint64_t seed = 0;
};

struct StudyRow {
  std::size_t checkpoint = 0;
  double rank1 = 0.0;
  double sign_accuracy = 0.0;
  double idf1 = 0.0;
};

/// Cross-camera tracking on frozen single-camera truth, one row per
/// embedding checkpoint. `labels` gives the true identity per detection
/// (-1 for clutter, which is ignored); checkpoints share the detections.
std::vector<StudyRow> tracking_vs_rank_study(const std::vector<EmbeddingSet>& checkpoints, const std::vector<Detection>& detections,
                                             const std::vector<int>& labels, const ScenarioConfig& config,
                                             const StudyOptions& options = {});

/// Single-camera pieces of the labeled detections: a new piece starts when an
/// identity changes camera or skips more than one second within a camera.
std::vector<std::vector<std::size_t>> single_camera_truth(const std::vector<Detection>& detections, const std::vector<int>& labels,
                                                          int fps);

std::string format_study(const std::vector<StudyRow>& rows);

/// Re-ID ranking over labeled detections: the gallery keeps one detection per
/// identity every `stride` frames; queries are gallery entries whose identity
/// also appears in another camera (at most `max_queries`, seeded choice).
RankResult cross_camera_rank(const EmbeddingSet& features, const std::vector<Detection>& detections, const std::vector<int>& labels,
                             int stride, std::size_t max_queries, std::uint64_t seed);

struct ClusterData;

/// Rank-1 of held-out cluster samples after embedding: even samples of each
/// identity query the odd ones.
double held_out_rank1(const ToyEmbedder& embedder, const ClusterData& held_out);

struct LossDemoRow {
  WeightScheme scheme = WeightScheme::adaptive;
  bool diverged = false;
  int diverged_at = -1;
  double rank1 = 0.0;
  std::vector<double> trace;
};

/// Trains one toy embedder per scheme from the same initial weights and
/// batches, then scores each on held-out draws of the same identities.
std::vector<LossDemoRow> loss_demo(const ClusterData& train, const ClusterData& held_out, TrainConfig config, int iterations,
                                   const std::vector<WeightScheme>& schemes);

std::string format_loss_demo(const std::vector<LossDemoRow>& rows);

}  // namespace mtmc
