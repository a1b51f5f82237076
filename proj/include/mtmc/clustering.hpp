#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtmc/correlation.hpp"

namespace mtmc {

/// Cluster label per node, renumbered densely in first-occurrence order.
class Partition {
 public:
  Partition() = default;
  explicit Partition(std::vector<int> labels);

  static Partition singletons(std::size_t n);

  const std::vector<int>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }
  int label(std::size_t i) const { return labels_[i]; }
  int cluster_count() const;
  std::vector<std::vector<std::size_t>> clusters() const;
  bool together(std::size_t i, std::size_t j) const { return labels_[i] == labels_[j]; }

  bool operator==(const Partition&) const = default;
  auto operator<=>(const Partition&) const = default;

  std::string to_text() const;  // "node:label" lines

 private:
  std::vector<int> labels_;
};

/// Sum of within-cluster correlations; throws DataError if a forbidden pair shares a cluster.
double objective(const CorrelationMatrix& w, const Partition& p);

/// Maximum-objective partition by branch-and-bound over restricted growth
/// strings; the lexicographically smallest labeling wins ties.
Partition solve_exact(const CorrelationMatrix& w, std::size_t exact_limit = 12);

/// Greedy agglomeration only (no local search).
Partition solve_greedy(const CorrelationMatrix& w);

/// Greedy agglomeration followed by relocation, merge and split moves.
Partition solve_heuristic(const CorrelationMatrix& w, std::uint64_t seed);

/// Exact when n <= exact_limit, heuristic otherwise.
Partition solve(const CorrelationMatrix& w, std::size_t exact_limit, std::uint64_t seed);

bool verify_transitivity(const Partition& p);
/// Checks x_ij + x_jk <= 1 + x_ik for a raw symmetric 0/1 incidence matrix.
bool verify_transitivity(const std::vector<std::vector<int>>& incidence);

}  // namespace mtmc
