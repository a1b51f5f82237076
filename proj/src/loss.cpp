#include "mtmc/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mtmc/parallel.hpp"

namespace mtmc {

namespace {

struct AnchorTerms {
  double loss = 0.0;
  // d loss / d d(anchor, i) for every row i; zero outside P(a) and N(a).
  std::vector<double> coefficient;
};

std::vector<double> softmax(std::span<const double> values, double sign) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  double peak = sign * values[0];
  for (double v : values) peak = std::max(peak, sign * v);
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(sign * values[i] - peak);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

std::vector<double> gather(std::span<const double> values, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(values[r]);
  return out;
}

AnchorTerms anchor_terms(std::span<const double> distances, const TripletBatch& batch, WeightScheme scheme,
                         double margin, bool through_weights) {
  TripletWeights w = triplet_weights(distances, batch, scheme);
  double positive_sum = 0.0;
  for (std::size_t i = 0; i < w.positive_rows.size(); ++i) positive_sum += w.positive[i] * distances[w.positive_rows[i]];
  double negative_sum = 0.0;
  for (std::size_t i = 0; i < w.negative_rows.size(); ++i) negative_sum += w.negative[i] * distances[w.negative_rows[i]];

  AnchorTerms terms;
  terms.coefficient.assign(distances.size(), 0.0);
  double inner = margin + positive_sum - negative_sum;
  if (inner <= 0.0) return terms;  // flat side of the hinge, subgradient 0 at the kink
  terms.loss = inner;

  bool chain = through_weights && scheme == WeightScheme::adaptive;
  for (std::size_t i = 0; i < w.positive_rows.size(); ++i) {
    double d = distances[w.positive_rows[i]];
    terms.coefficient[w.positive_rows[i]] = chain ? w.positive[i] * (1.0 + d - positive_sum) : w.positive[i];
  }
  for (std::size_t i = 0; i < w.negative_rows.size(); ++i) {
    double d = distances[w.negative_rows[i]];
    terms.coefficient[w.negative_rows[i]] = chain ? -w.negative[i] * (1.0 - d + negative_sum) : -w.negative[i];
  }
  return terms;
}

// Accumulates d loss / d embeddings given per-row distance coefficients.
void accumulate_gradient(const Eigen::MatrixXd& x, std::size_t anchor, std::span<const double> distances,
                         std::span<const double> coefficient, DistanceKind kind, Eigen::MatrixXd& gradient) {
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double c = coefficient[static_cast<std::size_t>(i)];
    if (c == 0.0) continue;
    Eigen::RowVectorXd diff = x.row(static_cast<Eigen::Index>(anchor)) - x.row(i);
    Eigen::RowVectorXd dd;
    if (kind == DistanceKind::squared_euclidean) {
      dd = 2.0 * diff;
    } else {
      double d = distances[static_cast<std::size_t>(i)];
      if (d == 0.0) continue;
      dd = diff / d;
    }
    gradient.row(static_cast<Eigen::Index>(anchor)) += c * dd;
    gradient.row(i) -= c * dd;
  }
}

double row_distance(const Eigen::MatrixXd& x, Eigen::Index i, Eigen::Index j, DistanceKind kind) {
  double sq = (x.row(i) - x.row(j)).squaredNorm();
  return kind == DistanceKind::squared_euclidean ? sq : std::sqrt(sq);
}

}  // namespace

const char* to_string(WeightScheme scheme) {
  switch (scheme) {
    case WeightScheme::uniform: return "uniform";
    case WeightScheme::batch_hard: return "batch_hard";
    case WeightScheme::adaptive: return "adaptive";
  }
  return "?";
}

const char* to_string(DistanceKind kind) {
  return kind == DistanceKind::euclidean ? "euclidean" : "squared_euclidean";
}

WeightScheme parse_weight_scheme(const std::string& name) {
  if (name == "uniform") return WeightScheme::uniform;
  if (name == "batch_hard") return WeightScheme::batch_hard;
  if (name == "adaptive") return WeightScheme::adaptive;
  throw DataError("unknown weight scheme: " + name);
}

DistanceKind parse_distance_kind(const std::string& name) {
  if (name == "euclidean") return DistanceKind::euclidean;
  if (name == "squared_euclidean") return DistanceKind::squared_euclidean;
  throw DataError("unknown distance kind: " + name);
}

std::vector<std::size_t> TripletBatch::positives() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (i != anchor && labels[i] == labels[anchor]) out.push_back(i);
  return out;
}

std::vector<std::size_t> TripletBatch::negatives() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != labels[anchor]) out.push_back(i);
  return out;
}

void TripletBatch::validate() const {
  if (labels.size() != static_cast<std::size_t>(embeddings.rows())) throw DataError("label count differs from row count");
  if (anchor >= labels.size()) throw DataError("anchor out of range");
  std::map<int, int> multiplicity;
  for (int l : labels) ++multiplicity[l];
  int k = multiplicity.begin()->second;
  for (const auto& [label, m] : multiplicity)
    if (m != k) throw DataError("identity " + std::to_string(label) + " has " + std::to_string(m) + " rows, expected " + std::to_string(k));
  if (k < 2) throw DataError("empty positive set");
  if (multiplicity.size() < 2) throw DataError("empty negative set");
  if (!embeddings.allFinite()) throw DataError("non-finite embedding");
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& embeddings, DistanceKind kind) {
  if (embeddings.rows() < 1) throw DataError("pairwise_distances needs at least one row");
  if (!embeddings.allFinite()) throw DataError("non-finite embedding");
  const Eigen::Index n = embeddings.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out(i, j) = out(j, i) = row_distance(embeddings, i, j, kind);
  return out;
}

TripletWeights triplet_weights(std::span<const double> distances, const TripletBatch& batch, WeightScheme scheme) {
  if (distances.size() != batch.labels.size()) throw DataError("distance count differs from batch size");
  for (double d : distances)
    if (!std::isfinite(d)) throw DataError("non-finite distance");
  TripletWeights w;
  w.positive_rows = batch.positives();
  w.negative_rows = batch.negatives();
  if (w.positive_rows.empty()) throw DataError("empty positive set");
  if (w.negative_rows.empty()) throw DataError("empty negative set");
  auto dp = gather(distances, w.positive_rows);
  auto dn = gather(distances, w.negative_rows);

  switch (scheme) {
    case WeightScheme::uniform:
      w.positive.assign(dp.size(), 1.0 / static_cast<double>(dp.size()));
      w.negative.assign(dn.size(), 1.0 / static_cast<double>(dn.size()));
      break;
    case WeightScheme::batch_hard: {
      // max_element/min_element return the first extremum, i.e. the lowest row.
      w.positive.assign(dp.size(), 0.0);
      w.negative.assign(dn.size(), 0.0);
      w.positive[static_cast<std::size_t>(std::max_element(dp.begin(), dp.end()) - dp.begin())] = 1.0;
      w.negative[static_cast<std::size_t>(std::min_element(dn.begin(), dn.end()) - dn.begin())] = 1.0;
      break;
    }
    case WeightScheme::adaptive:
      w.positive = softmax(dp, 1.0);
      w.negative = softmax(dn, -1.0);
      break;
  }
  return w;
}

double triplet_loss(const TripletBatch& batch, WeightScheme scheme, DistanceKind kind, double margin) {
  if (!(margin >= 0.0)) throw DataError("margin must be non-negative");
  batch.validate();
  std::vector<double> d(batch.labels.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = row_distance(batch.embeddings, static_cast<Eigen::Index>(batch.anchor), static_cast<Eigen::Index>(i), kind);
  return anchor_terms(d, batch, scheme, margin, false).loss;
}

Eigen::MatrixXd triplet_loss_gradient(const TripletBatch& batch, WeightScheme scheme, DistanceKind kind, double margin,
                                      bool through_weights) {
  if (!(margin >= 0.0)) throw DataError("margin must be non-negative");
  batch.validate();
  std::vector<double> d(batch.labels.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = row_distance(batch.embeddings, static_cast<Eigen::Index>(batch.anchor), static_cast<Eigen::Index>(i), kind);
  AnchorTerms terms = anchor_terms(d, batch, scheme, margin, through_weights);
  Eigen::MatrixXd gradient = Eigen::MatrixXd::Zero(batch.embeddings.rows(), batch.embeddings.cols());
  accumulate_gradient(batch.embeddings, batch.anchor, d, terms.coefficient, kind, gradient);
  return gradient;
}

BatchObjective all_anchor_objective(const TripletBatch& batch, WeightScheme scheme, DistanceKind kind, double margin,
                                    bool through_weights, int threads) {
  batch.validate();
  const std::size_t n = batch.labels.size();
  Eigen::MatrixXd distances = pairwise_distances(batch.embeddings, kind);
  std::vector<double> losses(n, 0.0);
  std::vector<Eigen::MatrixXd> partial(n);
  parallel_for(n, threads, [&](std::size_t a) {
    TripletBatch view{Eigen::MatrixXd(), batch.labels, a};
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) row[i] = distances(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i));
    AnchorTerms terms = anchor_terms(row, view, scheme, margin, through_weights);
    losses[a] = terms.loss;
    partial[a] = Eigen::MatrixXd::Zero(batch.embeddings.rows(), batch.embeddings.cols());
    accumulate_gradient(batch.embeddings, a, row, terms.coefficient, kind, partial[a]);
  });
  BatchObjective out;
  out.gradient = Eigen::MatrixXd::Zero(batch.embeddings.rows(), batch.embeddings.cols());
  for (std::size_t a = 0; a < n; ++a) {
    out.loss += losses[a];
    out.gradient += partial[a];
  }
  out.loss /= static_cast<double>(n);
  out.gradient /= static_cast<double>(n);
  return out;
}

IdentityPools build_identity_pools(const EmbeddingSet& embeddings, int H) {
  if (!embeddings.labeled()) throw DataError("identity pools need labeled embeddings");
  embeddings.validate();
  if (H < 1) throw DataError("H must be positive");
  std::map<int, std::pair<Eigen::VectorXd, int>> sums;
  for (std::size_t i = 0; i < embeddings.count(); ++i) {
    auto& [sum, count] = sums[embeddings.identity[i]];
    if (count == 0) sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(embeddings.dim()));
    sum += embeddings.rows.row(static_cast<Eigen::Index>(i)).cast<double>().transpose();
    ++count;
  }
  if (sums.size() < 2) throw DataError("identity pools need at least two identities");
  std::vector<int> ids;
  std::vector<Eigen::VectorXd> centroids;
  for (auto& [id, sc] : sums) {
    ids.push_back(id);
    centroids.push_back(sc.first / sc.second);
  }
  IdentityPools pools;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    std::vector<std::pair<double, int>> others;
    for (std::size_t b = 0; b < ids.size(); ++b)
      if (b != a) others.emplace_back((centroids[a] - centroids[b]).norm(), ids[b]);
    std::sort(others.begin(), others.end());
    std::size_t hard_count = std::min<std::size_t>(static_cast<std::size_t>(H), others.size());
    IdentityPool pool;
    for (std::size_t k = 0; k < others.size(); ++k)
      (k < hard_count ? pool.hard : pool.random).push_back(others[k].second);
    std::sort(pool.random.begin(), pool.random.end());
    pools.emplace(ids[a], std::move(pool));
  }
  return pools;
}

PkSample sample_pk_batch(const std::map<int, std::vector<std::size_t>>& samples_by_identity, int anchor_identity, int P,
                         int K, const IdentityPools* pools, std::uint64_t seed) {
  if (P < 2 || K < 2) throw DataError("PK batches need P >= 2 and K >= 2");
  if (static_cast<int>(samples_by_identity.size()) < P)
    throw DataError("need at least P=" + std::to_string(P) + " identities, have " + std::to_string(samples_by_identity.size()));
  auto anchor_it = samples_by_identity.find(anchor_identity);
  if (anchor_it == samples_by_identity.end() || anchor_it->second.empty())
    throw DataError("anchor identity " + std::to_string(anchor_identity) + " has no samples");

  std::mt19937_64 rng(seed);
  auto take = [&rng](std::vector<int>& from) {
    std::uniform_int_distribution<std::size_t> pick(0, from.size() - 1);
    std::size_t k = pick(rng);
    int id = from[k];
    from.erase(from.begin() + static_cast<std::ptrdiff_t>(k));
    return id;
  };

  std::vector<int> chosen{anchor_identity};
  if (pools == nullptr) {
    std::vector<int> others;
    for (const auto& [id, rows] : samples_by_identity)
      if (id != anchor_identity && !rows.empty()) others.push_back(id);
    while (static_cast<int>(chosen.size()) < P) {
      if (others.empty()) throw DataError("not enough identities with samples");
      chosen.push_back(take(others));
    }
  } else {
    auto pool_it = pools->find(anchor_identity);
    if (pool_it == pools->end()) throw DataError("no identity pool for anchor " + std::to_string(anchor_identity));
    auto usable = [&](const std::vector<int>& ids) {
      std::vector<int> out;
      for (int id : ids) {
        auto it = samples_by_identity.find(id);
        if (it != samples_by_identity.end() && !it->second.empty() && id != anchor_identity) out.push_back(id);
      }
      return out;
    };
    std::vector<int> hard = usable(pool_it->second.hard);
    std::vector<int> random = usable(pool_it->second.random);
    std::bernoulli_distribution coin(0.5);
    while (static_cast<int>(chosen.size()) < P) {
      if (hard.empty() && random.empty()) throw DataError("identity pools exhausted before filling P identities");
      bool use_hard = coin(rng);
      if (use_hard && hard.empty()) use_hard = false;
      if (!use_hard && random.empty()) use_hard = true;
      chosen.push_back(take(use_hard ? hard : random));
    }
  }

  PkSample sample;
  for (int id : chosen) {
    std::vector<std::size_t> rows = samples_by_identity.at(id);
    if (static_cast<int>(rows.size()) >= K) {
      for (int k = 0; k < K; ++k) {
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), rows.size() - 1);
        std::swap(rows[static_cast<std::size_t>(k)], rows[pick(rng)]);
        sample.rows.push_back(rows[static_cast<std::size_t>(k)]);
        sample.labels.push_back(id);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
      for (int k = 0; k < K; ++k) {
        sample.rows.push_back(rows[pick(rng)]);
        sample.labels.push_back(id);
      }
    }
  }
  sample.anchor = 0;
  return sample;
}

TripletBatch make_triplet_batch(const PkSample& sample, const Eigen::MatrixXd& features) {
  TripletBatch batch;
  batch.embeddings.resize(static_cast<Eigen::Index>(sample.rows.size()), features.cols());
  for (std::size_t i = 0; i < sample.rows.size(); ++i) {
    if (sample.rows[i] >= static_cast<std::size_t>(features.rows())) throw DataError("sample row out of range");
    batch.embeddings.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(sample.rows[i]));
  }
  batch.labels = sample.labels;
  batch.anchor = sample.anchor;
  return batch;
}

}  // namespace mtmc
