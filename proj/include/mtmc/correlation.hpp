#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mtmc/model.hpp"

namespace mtmc {

/// Symmetric pairwise scores with a separate mask for impossible pairs.
/// Forbidden entries carry no value; solvers treat them as cannot-link.
class CorrelationMatrix {
 public:
  CorrelationMatrix() = default;
  explicit CorrelationMatrix(std::size_t n);
  explicit CorrelationMatrix(const Eigen::MatrixXd& values);

  std::size_t size() const { return n_; }
  double value(std::size_t i, std::size_t j) const { return values_(idx(i), idx(j)); }
  bool forbidden(std::size_t i, std::size_t j) const { return forbidden_[i * n_ + j] != 0; }
  /// Value, or 0 for forbidden and diagonal entries.
  double score(std::size_t i, std::size_t j) const { return i == j || forbidden(i, j) ? 0.0 : value(i, j); }

  void set(std::size_t i, std::size_t j, double v);
  void forbid(std::size_t i, std::size_t j);

  const Eigen::MatrixXd& values() const { return values_; }
  CorrelationMatrix scaled(double factor) const;

  /// Rows of space-separated values with "F" for forbidden pairs and "-" on the diagonal.
  std::string to_text() const;

 private:
  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }
  std::size_t n_ = 0;
  Eigen::MatrixXd values_;
  std::vector<unsigned char> forbidden_;
};

struct MotionParams {
  double t_m = 1.0;
  double alpha = 0.5;
  double speed_limit = 7.0;
  double beta = 0.05;

  void validate() const;
  bool operator==(const MotionParams&) const = default;
};

MotionParams motion_params(const ScenarioConfig& config);

struct AppearanceCalibration {
  double mu_p = 0.0;
  double mu_n = 0.0;
  double t_a = 1.0;

  static AppearanceCalibration from_means(double mu_p, double mu_n);
};

/// Means of co-identical and non-co-identical pair distances. Each class uses
/// every pair when it has at most `max_pairs`, else `max_pairs` uniform draws.
AppearanceCalibration calibrate_appearance(const EmbeddingSet& embeddings, std::size_t max_pairs, std::uint64_t seed);

double appearance_correlation(double distance, const AppearanceCalibration& calibration);

struct TimedPoint {
  std::int64_t frame = 0;
  WorldPoint world;
};

struct MotionEvidence {
  bool impossible = false;
  double error = 0.0;  // e_f + e_b, meaningful only when possible
};

/// Forward-backward constant-velocity prediction error between two
/// time-disjoint fragments, each sorted by frame. Velocities come from a
/// least-squares line over the last (earlier) / first (later) min(len, fps) points.
MotionEvidence motion_error(std::span<const TimedPoint> earlier, std::span<const TimedPoint> later, int fps,
                            double speed_limit);

/// alpha * (t_m - e_m); std::nullopt stands for a forbidden pair.
std::optional<double> motion_correlation(const MotionEvidence& evidence, const MotionParams& params);

double decay_factor(double dt_seconds, double beta);

/// Elementwise (W_a + W_m) * D; forbidden pairs of either input stay forbidden.
CorrelationMatrix combine(const CorrelationMatrix& appearance, const CorrelationMatrix& motion, const Eigen::MatrixXd& decay);

/// A node for correlation: its trajectory points and the embedding rows representing it.
struct Fragment {
  std::vector<TimedPoint> points;  // sorted by frame
  std::vector<std::size_t> appearance_rows;
};

/// Up to `limit` uniformly spaced positions in [0, count).
std::vector<std::size_t> representative_positions(std::size_t count, std::size_t limit = 8);

struct CorrelationParts {
  CorrelationMatrix appearance;
  CorrelationMatrix motion;
  Eigen::MatrixXd decay;
};

CorrelationParts correlation_parts(std::span<const Fragment> fragments, const EmbeddingMatrix& embeddings,
                                   const AppearanceCalibration& calibration, const MotionParams& params, int fps,
                                   int threads = 1);

CorrelationMatrix build_correlation(std::span<const Fragment> fragments, const EmbeddingMatrix& embeddings,
                                    const AppearanceCalibration& calibration, const MotionParams& params, int fps,
                                    int threads = 1);

/// Grid point with the highest score; the first one wins ties.
MotionParams select_motion_params(std::span<const MotionParams> grid, const std::function<double(const MotionParams&)>& score);

}  // namespace mtmc
