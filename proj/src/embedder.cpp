#include <cmath>
#include <random>
#include <sstream>

#include "mtmc/loss.hpp"

namespace mtmc {

double LearningRateSchedule::rate(int iteration) const {
  if (iteration < hold_until) return initial;
  if (iteration >= decay_until || decay_until <= hold_until) return final;
  double progress = static_cast<double>(iteration - hold_until) / static_cast<double>(decay_until - hold_until);
  if (initial > 0.0 && final > 0.0) return initial * std::pow(final / initial, progress);
  return initial + (final - initial) * progress;
}

ToyEmbedder::ToyEmbedder(int input_dim, int embed_dim, std::uint64_t seed) {
  if (input_dim < 1 || embed_dim < 2) throw DataError("toy embedder needs input_dim >= 1 and embed_dim >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(input_dim)));
  weights_.resize(embed_dim, input_dim);
  for (Eigen::Index i = 0; i < weights_.rows(); ++i)
    for (Eigen::Index j = 0; j < weights_.cols(); ++j) weights_(i, j) = normal(rng);
}

ToyEmbedder::ToyEmbedder(Eigen::MatrixXd weights) : weights_(std::move(weights)) {
  if (weights_.rows() < 2 || weights_.cols() < 1) throw DataError("toy embedder needs embed_dim >= 2");
  if (!weights_.allFinite()) throw DataError("non-finite embedder weights");
}

Eigen::MatrixXd ToyEmbedder::embed(const Eigen::MatrixXd& inputs) const { return inputs * weights_.transpose(); }

DivergenceError::DivergenceError(int iteration, const std::string& what)
    : std::runtime_error("diverged at iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}

TrainResult train_toy_embedder(const EmbeddingSet& data, const TrainConfig& config, int iterations) {
  return train_toy_embedder(data, config, iterations,
                            ToyEmbedder(static_cast<int>(data.dim()), config.embed_dim, config.seed ^ 0x9e3779b97f4a7c15ull));
}

TrainResult train_toy_embedder(const EmbeddingSet& data, const TrainConfig& config, int iterations, ToyEmbedder initial) {
  if (!data.labeled()) throw DataError("training data must be labeled");
  data.validate();
  if (iterations < 1) throw DataError("iterations must be at least 1");
  if (static_cast<std::size_t>(initial.weights().cols()) != data.dim()) throw DataError("embedder input dim differs from data");

  const Eigen::MatrixXd inputs = data.rows.cast<double>();
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < data.count(); ++i) by_identity[data.identity[i]].push_back(i);
  std::vector<int> identities;
  for (const auto& [id, rows] : by_identity) identities.push_back(id);

  TrainResult result{std::move(initial), {}};
  result.trace.reserve(static_cast<std::size_t>(iterations));
  std::optional<IdentityPools> pools;
  std::mt19937_64 seeds(config.seed);

  for (int it = 0; it < iterations; ++it) {
    if (config.hard_mining && it == config.pool_iteration) {
      EmbeddingSet features;
      features.rows = result.embedder.embed(inputs).cast<float>();
      features.identity = data.identity;
      pools = build_identity_pools(features, config.H);
    }
    // One anchor identity per iteration, cycling in ascending label order.
    int anchor_identity = identities[static_cast<std::size_t>(it) % identities.size()];
    PkSample sample = sample_pk_batch(by_identity, anchor_identity, config.P, config.K, pools ? &*pools : nullptr, seeds());

    Eigen::MatrixXd batch_inputs(static_cast<Eigen::Index>(sample.rows.size()), inputs.cols());
    for (std::size_t r = 0; r < sample.rows.size(); ++r)
      batch_inputs.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(sample.rows[r]));
    TripletBatch batch{result.embedder.embed(batch_inputs), sample.labels, sample.anchor};
    if (!batch.embeddings.allFinite()) throw DivergenceError(it, "non-finite embeddings");

    BatchObjective objective;
    try {
      objective = all_anchor_objective(batch, config.scheme, config.kind, config.margin, config.through_weights, config.threads);
    } catch (const DataError& e) {
      throw DivergenceError(it, e.what());  // finite embeddings whose distances overflow
    }
    if (!std::isfinite(objective.loss)) throw DivergenceError(it, "non-finite loss");
    result.trace.push_back(objective.loss);

    // e = W x, so dL/dW = G^T X over the batch rows.
    Eigen::MatrixXd step = objective.gradient.transpose() * batch_inputs;
    result.embedder.weights() -= config.schedule.rate(it) * step;
    if (!result.embedder.weights().allFinite()) throw DivergenceError(it, "non-finite weights");
  }
  return result;
}

std::string format_loss_trace(std::span<const double> trace) {
  std::ostringstream out;
  out << "# iteration loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ' ' << format_real(trace[i]) << '\n';
  return out.str();
}

}  // namespace mtmc
