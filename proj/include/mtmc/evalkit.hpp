#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mtmc/model.hpp"

namespace mtmc {

double intersection_over_union(const Box& a, const Box& b);

struct IdMapping {
  std::vector<std::pair<int, int>> pairs;  // (true identity, computed identity)
  long long idtp = 0;
  long long idfp = 0;
  long long idfn = 0;
};

struct IdMeasures {
  IdMapping mapping;
  double idf1 = 0.0;
  double idp = 0.0;
  double idr = 0.0;
  std::vector<std::string> warnings;  // set when a ratio had an empty denominator
};

/// Identity-aware precision/recall under the optimal one-to-one identity mapping.
/// Detections match per camera and frame when IoU >= iou_threshold.
IdMeasures id_measures(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& computed,
                       double iou_threshold = 0.5);

/// Pairwise co-occurrence counts used by id_measures; rows follow
/// `truth_ids`, columns follow `computed_ids` (both ascending).
struct MatchCounts {
  std::vector<int> truth_ids;
  std::vector<int> computed_ids;
  std::vector<long long> truth_sizes;
  std::vector<long long> computed_sizes;
  std::vector<std::vector<long long>> matches;
};
MatchCounts match_counts(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& computed, double iou_threshold);

/// Maximum-weight assignment on a rectangular non-negative matrix; entry i is
/// the column assigned to row i or -1.
std::vector<int> max_weight_assignment(const std::vector<std::vector<long long>>& weights);

struct RankResult {
  std::vector<std::vector<std::size_t>> order;  // per query, valid gallery indices by ascending distance
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double mean_ap = 0.0;
  std::vector<double> average_precision;
};

/// Gallery entries sharing both identity and camera with a query are excluded.
RankResult rank_map(const Eigen::MatrixXd& distances, const std::vector<int>& query_ids, const std::vector<int>& gallery_ids,
                    const std::vector<int>& query_cameras, const std::vector<int>& gallery_cameras);

/// "name=value" lines, or one comma-separated header+row with `csv`.
std::string format_id_measures(const IdMeasures& m, bool csv);
std::string format_rank(const RankResult& r, bool csv);

}  // namespace mtmc
