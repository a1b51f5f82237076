#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mtmc/model.hpp"

namespace mtmc {

enum class WeightScheme { uniform, batch_hard, adaptive };
enum class DistanceKind { euclidean, squared_euclidean };

const char* to_string(WeightScheme scheme);
const char* to_string(DistanceKind kind);
WeightScheme parse_weight_scheme(const std::string& name);
DistanceKind parse_distance_kind(const std::string& name);

/// P identities with K rows each; loss terms are taken relative to `anchor`.
struct TripletBatch {
  Eigen::MatrixXd embeddings;
  std::vector<int> labels;
  std::size_t anchor = 0;

  std::vector<std::size_t> positives() const;  // same label, excluding the anchor
  std::vector<std::size_t> negatives() const;
  /// Throws DataError unless every label occurs equally often and P(a), N(a) are nonempty.
  void validate() const;
};

struct TripletWeights {
  std::vector<std::size_t> positive_rows;
  std::vector<double> positive;
  std::vector<std::size_t> negative_rows;
  std::vector<double> negative;
};

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& embeddings, DistanceKind kind);

/// `distances_to_anchor[i]` is d(x_anchor, x_i) for every row i of the batch.
TripletWeights triplet_weights(std::span<const double> distances_to_anchor, const TripletBatch& batch, WeightScheme scheme);

double triplet_loss(const TripletBatch& batch, WeightScheme scheme, DistanceKind kind, double margin);

/// Gradient of triplet_loss with respect to every embedding row. With
/// `through_weights` false the adaptive weights are held constant.
Eigen::MatrixXd triplet_loss_gradient(const TripletBatch& batch, WeightScheme scheme, DistanceKind kind, double margin,
                                      bool through_weights = true);

/// Mean loss and gradient over every row of the batch taken as anchor in turn.
struct BatchObjective {
  double loss = 0.0;
  Eigen::MatrixXd gradient;
};
BatchObjective all_anchor_objective(const TripletBatch& batch, WeightScheme scheme, DistanceKind kind, double margin,
                                    bool through_weights = true, int threads = 1);

struct IdentityPool {
  std::vector<int> hard;    // nearest first
  std::vector<int> random;  // ascending label
};
using IdentityPools = std::map<int, IdentityPool>;

/// Hard pool of each identity = the H identities with the nearest centroids.
IdentityPools build_identity_pools(const EmbeddingSet& embeddings, int H);

/// Row indices and labels of one PK batch; rows index the sample source.
struct PkSample {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  std::size_t anchor = 0;
};

PkSample sample_pk_batch(const std::map<int, std::vector<std::size_t>>& samples_by_identity, int anchor_identity, int P,
                         int K, const IdentityPools* pools, std::uint64_t seed);

TripletBatch make_triplet_batch(const PkSample& sample, const Eigen::MatrixXd& features);

struct LearningRateSchedule {
  double initial = 3e-4;
  double final = 1e-7;
  int hold_until = 15000;   // constant rate before this iteration
  int decay_until = 25000;  // reaches `final` here, exponential in between

  double rate(int iteration) const;
};

/// Linear map from inputs to embeddings: e = W x.
class ToyEmbedder {
 public:
  ToyEmbedder(int input_dim, int embed_dim, std::uint64_t seed);
  explicit ToyEmbedder(Eigen::MatrixXd weights);

  Eigen::MatrixXd embed(const Eigen::MatrixXd& inputs) const;
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& weights() { return weights_; }

 private:
  Eigen::MatrixXd weights_;
};

struct TrainConfig {
  WeightScheme scheme = WeightScheme::adaptive;
  DistanceKind kind = DistanceKind::euclidean;
  double margin = 1.0;
  int P = 18;
  int K = 4;
  int embed_dim = 16;
  bool hard_mining = false;
  int H = 50;
  int pool_iteration = 100;  // pools built once from embeddings at this iteration
  bool through_weights = true;
  LearningRateSchedule schedule{0.05, 1e-4, 600, 800};
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TrainResult {
  ToyEmbedder embedder;
  std::vector<double> trace;  // one loss value per iteration
};

/// Raised when training weights stop being finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int iteration, const std::string& what);
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

TrainResult train_toy_embedder(const EmbeddingSet& data, const TrainConfig& config, int iterations);
TrainResult train_toy_embedder(const EmbeddingSet& data, const TrainConfig& config, int iterations, ToyEmbedder initial);

/// Two-column "iteration loss" text.
std::string format_loss_trace(std::span<const double> trace);

}  // namespace mtmc
