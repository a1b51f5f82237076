#pragma once

// Slow, independent reference implementations shared by the unit tests and
// the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "mtmc/clustering.hpp"
#include "mtmc/correlation.hpp"
#include "mtmc/evalkit.hpp"
#include "mtmc/loss.hpp"

namespace oracle {

inline double distance(const Eigen::MatrixXd& x, std::size_t i, std::size_t j, mtmc::DistanceKind kind) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    double d = x(static_cast<Eigen::Index>(i), k) - x(static_cast<Eigen::Index>(j), k);
    s += d * d;
  }
  return kind == mtmc::DistanceKind::euclidean ? std::sqrt(s) : s;
}

// Generalized triplet loss written out term by term, with the weights
// computed straight from their definitions (no max-subtraction).
inline double triplet_loss(const mtmc::TripletBatch& b, mtmc::WeightScheme scheme, mtmc::DistanceKind kind, double margin) {
  std::vector<double> dp, dn;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (i == b.anchor) continue;
    (b.labels[i] == b.labels[b.anchor] ? dp : dn).push_back(distance(b.embeddings, b.anchor, i, kind));
  }
  double pos = 0.0, neg = 0.0;
  switch (scheme) {
    case mtmc::WeightScheme::uniform:
      for (double d : dp) pos += d / static_cast<double>(dp.size());
      for (double d : dn) neg += d / static_cast<double>(dn.size());
      break;
    case mtmc::WeightScheme::batch_hard:
      pos = *std::max_element(dp.begin(), dp.end());
      neg = *std::min_element(dn.begin(), dn.end());
      break;
    case mtmc::WeightScheme::adaptive: {
      double zp = 0.0, zn = 0.0;
      for (double d : dp) zp += std::exp(d);
      for (double d : dn) zn += std::exp(-d);
      for (double d : dp) pos += std::exp(d) / zp * d;
      for (double d : dn) neg += std::exp(-d) / zn * d;
      break;
    }
  }
  return std::max(0.0, margin + pos - neg);
}

inline mtmc::TripletBatch random_batch(std::mt19937_64& rng, int P, int K, int dim, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  mtmc::TripletBatch b;
  b.embeddings.resize(P * K, dim);
  for (Eigen::Index i = 0; i < b.embeddings.rows(); ++i)
    for (Eigen::Index k = 0; k < dim; ++k) b.embeddings(i, k) = normal(rng);
  for (int p = 0; p < P; ++p)
    for (int k = 0; k < K; ++k) b.labels.push_back(p);
  std::shuffle(b.labels.begin(), b.labels.end(), rng);
  b.anchor = std::uniform_int_distribution<std::size_t>(0, b.labels.size() - 1)(rng);
  return b;
}

inline Eigen::MatrixXd central_differences(mtmc::TripletBatch b, mtmc::WeightScheme scheme, mtmc::DistanceKind kind,
                                           double margin, double h = 1e-4) {
  Eigen::MatrixXd g(b.embeddings.rows(), b.embeddings.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index k = 0; k < g.cols(); ++k) {
      double keep = b.embeddings(i, k);
      b.embeddings(i, k) = keep + h;
      double up = mtmc::triplet_loss(b, scheme, kind, margin);
      b.embeddings(i, k) = keep - h;
      double down = mtmc::triplet_loss(b, scheme, kind, margin);
      b.embeddings(i, k) = keep;
      g(i, k) = (up - down) / (2.0 * h);
    }
  return g;
}

// True when the hinge is clearly active and batch-hard picks are unambiguous,
// so the loss is smooth in a neighbourhood of the batch.
inline bool away_from_boundaries(const mtmc::TripletBatch& b, mtmc::DistanceKind kind, double margin, double gap) {
  std::vector<double> dp, dn;
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    if (i == b.anchor) continue;
    (b.labels[i] == b.labels[b.anchor] ? dp : dn).push_back(distance(b.embeddings, b.anchor, i, kind));
  }
  std::sort(dp.begin(), dp.end());
  std::sort(dn.begin(), dn.end());
  if (dp.size() > 1 && dp[dp.size() - 1] - dp[dp.size() - 2] < gap) return false;
  if (dn.size() > 1 && dn[1] - dn[0] < gap) return false;
  if (dp.front() < gap || dn.front() < gap) return false;  // euclidean is not smooth at 0
  for (auto scheme : {mtmc::WeightScheme::uniform, mtmc::WeightScheme::batch_hard, mtmc::WeightScheme::adaptive}) {
    double inner = oracle::triplet_loss(b, scheme, kind, margin);
    if (inner < gap) return false;
  }
  return true;
}

inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

// Every partition as a restricted growth string, in lexicographic order,
// with no pruning at all. Returns the first labeling of maximal objective.
struct Enumerated {
  double value = 0.0;
  std::vector<int> labels;
};

inline double partition_value(const mtmc::CorrelationMatrix& w, const std::vector<int>& labels, bool* feasible) {
  double v = 0.0;
  *feasible = true;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (labels[i] != labels[j]) continue;
      if (w.forbidden(i, j)) *feasible = false;
      else v += w.value(i, j);
    }
  return v;
}

inline Enumerated best_partition(const mtmc::CorrelationMatrix& w) {
  const std::size_t n = w.size();
  Enumerated best;
  bool have = false;
  std::vector<int> labels(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
    if (i == n) {
      bool feasible = false;
      double v = partition_value(w, labels, &feasible);
      if (feasible && (!have || v > best.value + 1e-12)) {
        best = {v, labels};
        have = true;
      }
      return;
    }
    for (int c = 0; c <= used; ++c) {
      labels[i] = c;
      rec(i + 1, c == used ? used + 1 : used);
    }
  };
  if (n == 0) return best;
  rec(0, 0);
  return best;
}

inline mtmc::CorrelationMatrix random_correlation(std::mt19937_64& rng, std::size_t n, double forbid_probability) {
  std::uniform_real_distribution<double> value(-1.0, 1.0), unit(0.0, 1.0);
  mtmc::CorrelationMatrix w(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = value(rng);
      if (unit(rng) < forbid_probability) w.forbid(i, j);
      else w.set(i, j, v);
    }
  return w;
}

// Largest total co-occurrence over all injective partial maps rows -> cols.
inline long long best_injective(const std::vector<std::vector<long long>>& m) {
  const std::size_t rows = m.size();
  const std::size_t cols = rows ? m[0].size() : 0;
  std::vector<char> taken(cols, 0);
  long long best = 0;
  std::function<void(std::size_t, long long)> rec = [&](std::size_t r, long long acc) {
    if (r == rows) {
      best = std::max(best, acc);
      return;
    }
    rec(r + 1, acc);
    for (std::size_t c = 0; c < cols; ++c) {
      if (taken[c]) continue;
      taken[c] = 1;
      rec(r + 1, acc + m[r][c]);
      taken[c] = 0;
    }
  };
  rec(0, 0);
  return best;
}

// Co-occurrence counts by direct scan over every detection pair.
inline std::vector<std::vector<long long>> cooccurrence(const std::vector<mtmc::Trajectory>& truth,
                                                        const std::vector<mtmc::Trajectory>& computed, double iou) {
  std::vector<std::vector<long long>> m(truth.size(), std::vector<long long>(computed.size(), 0));
  for (std::size_t a = 0; a < truth.size(); ++a)
    for (std::size_t b = 0; b < computed.size(); ++b)
      for (const auto& t : truth[a].detections)
        for (const auto& c : computed[b].detections)
          if (t.camera == c.camera && t.frame == c.frame && mtmc::intersection_over_union(t.box, c.box) >= iou) ++m[a][b];
  return m;
}

}  // namespace oracle
