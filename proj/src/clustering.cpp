#include "mtmc/clustering.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace mtmc {

namespace {

constexpr double kMinGain = 1e-12;

std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> renumber;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, inserted] = renumber.emplace(l, static_cast<int>(renumber.size()));
    out.push_back(it->second);
  }
  return out;
}

class ExactSearch {
 public:
  explicit ExactSearch(const CorrelationMatrix& w) : w_(w), n_(w.size()), labels_(n_, -1), remaining_(n_ + 1, 0.0) {
    // remaining_[i]: positive mass of edges decided when nodes i.. are placed.
    for (std::size_t i = n_; i-- > 0;) {
      double mass = 0.0;
      for (std::size_t j = 0; j < i; ++j)
        if (!w_.forbidden(i, j)) mass += std::max(0.0, w_.value(i, j));
      remaining_[i] = remaining_[i + 1] + mass;
    }
  }

  std::vector<int> run() {
    if (n_ == 0) return {};
    place(0, 0, 0.0);
    return best_labels_;
  }

 private:
  void place(std::size_t node, int clusters, double value) {
    if (node == n_) {
      if (!have_best_ || value > best_value_) {
        best_value_ = value;
        best_labels_ = labels_;
        have_best_ = true;
      }
      return;
    }
    if (have_best_ && value + remaining_[node] <= best_value_) return;

    std::vector<double> gain(static_cast<std::size_t>(clusters) + 1, 0.0);
    std::vector<char> blocked(static_cast<std::size_t>(clusters) + 1, 0);
    for (std::size_t j = 0; j < node; ++j) {
      auto c = static_cast<std::size_t>(labels_[j]);
      if (w_.forbidden(node, j)) blocked[c] = 1;
      else gain[c] += w_.value(node, j);
    }
    for (int c = 0; c <= clusters; ++c) {
      if (blocked[static_cast<std::size_t>(c)]) continue;
      labels_[node] = c;
      place(node + 1, c == clusters ? clusters + 1 : clusters, value + gain[static_cast<std::size_t>(c)]);
    }
    labels_[node] = -1;
  }

  const CorrelationMatrix& w_;
  std::size_t n_;
  std::vector<int> labels_;
  std::vector<double> remaining_;
  std::vector<int> best_labels_;
  double best_value_ = 0.0;
  bool have_best_ = false;
};

// Greedy agglomeration on cluster-level sums with lazily maintained best partners.
std::vector<int> greedy_labels(const CorrelationMatrix& w) {
  const std::size_t n = w.size();
  std::vector<double> sum(n * n, 0.0);
  std::vector<char> blocked(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (w.forbidden(i, j)) blocked[i * n + j] = 1;
      else sum[i * n + j] = w.value(i, j);
    }
  std::vector<char> active(n, 1);
  std::vector<int> owner(n);
  std::iota(owner.begin(), owner.end(), 0);
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(n, kNone);

  auto refresh = [&](std::size_t a) {
    best[a] = kNone;
    double value = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a || !active[b] || blocked[a * n + b]) continue;
      double s = sum[a * n + b];
      if (s > value) {
        value = s;
        best[a] = b;
      }
    }
  };
  for (std::size_t a = 0; a < n; ++a) refresh(a);

  while (true) {
    std::size_t pick = kNone;
    double value = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a] || best[a] == kNone) continue;
      double s = sum[a * n + best[a]];
      if (s > value) {
        value = s;
        pick = a;
      }
    }
    if (pick == kNone || value <= kMinGain) break;
    std::size_t a = std::min(pick, best[pick]);
    std::size_t b = std::max(pick, best[pick]);
    active[b] = 0;
    for (std::size_t x = 0; x < n; ++x) {
      if (x == a || x == b) continue;
      sum[a * n + x] += sum[b * n + x];
      sum[x * n + a] = sum[a * n + x];
      blocked[a * n + x] = blocked[x * n + a] = static_cast<char>(blocked[a * n + x] | blocked[b * n + x]);
    }
    for (std::size_t i = 0; i < n; ++i)
      if (owner[i] == static_cast<int>(b)) owner[i] = static_cast<int>(a);
    refresh(a);
    for (std::size_t x = 0; x < n; ++x) {
      if (!active[x] || x == a) continue;
      if (best[x] == a || best[x] == b) {
        refresh(x);
      } else if (!blocked[x * n + a]) {
        double current = best[x] == kNone ? 0.0 : sum[x * n + best[x]];
        double candidate = sum[x * n + a];
        if (candidate > current || (candidate == current && best[x] != kNone && a < best[x] && candidate > 0.0)) best[x] = a;
      }
    }
  }
  return owner;
}

class LocalSearch {
 public:
  LocalSearch(const CorrelationMatrix& w, std::vector<int> labels, std::uint64_t seed)
      : w_(w), n_(w.size()), label_(std::move(labels)), rng_(seed) {
    // Cluster slots 0..n-1; label_ values are slot ids.
    to_cluster_.assign(n_ * n_, 0.0);
    blocked_.assign(n_ * n_, 0);
    size_.assign(n_, 0);
    for (std::size_t v = 0; v < n_; ++v) ++size_[static_cast<std::size_t>(label_[v])];
    for (std::size_t v = 0; v < n_; ++v)
      for (std::size_t u = 0; u < n_; ++u) {
        if (u == v) continue;
        auto c = static_cast<std::size_t>(label_[u]);
        if (w_.forbidden(v, u)) ++blocked_[v * n_ + c];
        else to_cluster_[v * n_ + c] += w_.value(v, u);
      }
    refresh_live();
  }

  std::vector<int> run() {
    for (int round = 0; round < 1000; ++round) {
      bool improved = relocate_pass();
      improved = merge_pass() || improved;
      improved = split_pass() || improved;
      if (!improved) break;
    }
    return label_;
  }

 private:
  void move(std::size_t v, std::size_t to) {
    auto from = static_cast<std::size_t>(label_[v]);
    for (std::size_t u = 0; u < n_; ++u) {
      if (u == v) continue;
      if (w_.forbidden(u, v)) {
        --blocked_[u * n_ + from];
        ++blocked_[u * n_ + to];
      } else {
        double x = w_.value(u, v);
        to_cluster_[u * n_ + from] -= x;
        to_cluster_[u * n_ + to] += x;
      }
    }
    --size_[from];
    ++size_[to];
    label_[v] = static_cast<int>(to);
    if (size_[from] == 0 || size_[to] == 1) refresh_live();
  }

  void refresh_live() {
    live_.clear();
    for (std::size_t c = 0; c < n_; ++c)
      if (size_[c] > 0) live_.push_back(c);
  }

  std::size_t empty_slot() const {
    for (std::size_t c = 0; c < n_; ++c)
      if (size_[c] == 0) return c;
    return n_;
  }

  bool relocate_pass() {
    std::vector<std::size_t> order(n_);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    bool any = false;
    for (std::size_t v : order) {
      auto from = static_cast<std::size_t>(label_[v]);
      double stay = to_cluster_[v * n_ + from];
      double best_delta = kMinGain;
      std::size_t target = n_;
      for (std::size_t c : live_) {
        if (c == from || blocked_[v * n_ + c]) continue;
        double delta = to_cluster_[v * n_ + c] - stay;
        if (delta > best_delta) {
          best_delta = delta;
          target = c;
        }
      }
      if (size_[from] > 1 && -stay > best_delta) {
        best_delta = -stay;
        target = empty_slot();
      }
      if (target < n_) {
        move(v, target);
        any = true;
      }
    }
    return any;
  }

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(n_);
    for (std::size_t v = 0; v < n_; ++v) out[static_cast<std::size_t>(label_[v])].push_back(v);
    return out;
  }

  bool merge_pass() {
    bool any = false;
    const std::vector<std::size_t> slots = live_;
    for (std::size_t ia = 0; ia < slots.size(); ++ia) {
      std::size_t a = slots[ia];
      if (size_[a] == 0) continue;
      for (std::size_t ib = ia + 1; ib < slots.size(); ++ib) {
        std::size_t b = slots[ib];
        if (size_[b] == 0 || size_[a] == 0) continue;
        double between = 0.0;
        bool feasible = true;
        for (std::size_t v = 0; v < n_ && feasible; ++v) {
          if (static_cast<std::size_t>(label_[v]) != b) continue;
          if (blocked_[v * n_ + a]) feasible = false;
          between += to_cluster_[v * n_ + a];
        }
        if (!feasible || between <= kMinGain) continue;
        for (std::size_t v = 0; v < n_; ++v)
          if (static_cast<std::size_t>(label_[v]) == b) move(v, a);
        any = true;
      }
    }
    return any;
  }

  // Grows a second group out of each cluster from every seed node and keeps
  // the best strictly improving split.
  bool split_pass() {
    bool any = false;
    auto groups = members();
    for (auto& group : groups) {
      const std::size_t s = group.size();
      if (s < 2) continue;
      double best_delta = kMinGain;
      std::vector<std::size_t> best_part;
      for (std::size_t seed_pos = 0; seed_pos < s; ++seed_pos) {
        std::vector<char> in_part(s, 0);
        std::vector<double> to_part(s, 0.0), to_rest(s, 0.0);
        for (std::size_t i = 0; i < s; ++i)
          for (std::size_t j = 0; j < s; ++j)
            if (i != j) to_rest[i] += w_.score(group[i], group[j]);
        std::vector<std::size_t> part;
        double delta = 0.0;
        std::size_t next = seed_pos;
        while (part.size() + 1 < s) {
          delta += to_part[next] - to_rest[next];
          in_part[next] = 1;
          part.push_back(next);
          for (std::size_t x = 0; x < s; ++x) {
            if (x == next) continue;
            double wx = w_.score(group[x], group[next]);
            to_part[x] += wx;
            to_rest[x] -= wx;
          }
          if (delta > best_delta) {
            best_delta = delta;
            best_part.clear();
            for (auto p : part) best_part.push_back(group[p]);
          }
          double pick_value = -std::numeric_limits<double>::infinity();
          for (std::size_t x = 0; x < s; ++x) {
            if (in_part[x]) continue;
            double g = to_part[x] - to_rest[x];
            if (g > pick_value) {
              pick_value = g;
              next = x;
            }
          }
        }
      }
      if (!best_part.empty()) {
        std::size_t slot = empty_slot();
        for (auto v : best_part) move(v, slot);
        any = true;
      }
    }
    return any;
  }

  const CorrelationMatrix& w_;
  std::size_t n_;
  std::vector<int> label_;
  std::mt19937_64 rng_;
  std::vector<double> to_cluster_;
  std::vector<int> blocked_;
  std::vector<std::size_t> size_;
  std::vector<std::size_t> live_;
};

}  // namespace

Partition::Partition(std::vector<int> labels) : labels_(canonical(labels)) {
  for (int l : labels)
    if (l < 0) throw DataError("partition labels must be non-negative");
}

Partition Partition::singletons(std::size_t n) {
  std::vector<int> labels(n);
  std::iota(labels.begin(), labels.end(), 0);
  return Partition(std::move(labels));
}

int Partition::cluster_count() const {
  return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end()) + 1;
}

std::vector<std::vector<std::size_t>> Partition::clusters() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(cluster_count()));
  for (std::size_t i = 0; i < labels_.size(); ++i) out[static_cast<std::size_t>(labels_[i])].push_back(i);
  return out;
}

std::string Partition::to_text() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < labels_.size(); ++i) out << i << ':' << labels_[i] << '\n';
  return out.str();
}

double objective(const CorrelationMatrix& w, const Partition& p) {
  if (w.size() != p.size()) throw DataError("objective: partition size differs from matrix size");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      if (!p.together(i, j)) continue;
      if (w.forbidden(i, j))
        throw DataError("forbidden pair (" + std::to_string(i) + "," + std::to_string(j) + ") placed in one cluster");
      total += w.value(i, j);
    }
  return total;
}

Partition solve_exact(const CorrelationMatrix& w, std::size_t exact_limit) {
  if (w.size() > exact_limit)
    throw DataError("solve_exact: " + std::to_string(w.size()) + " nodes exceeds exact_limit " + std::to_string(exact_limit) +
                    "; use solve_heuristic");
  return Partition(ExactSearch(w).run());
}

Partition solve_greedy(const CorrelationMatrix& w) { return Partition(greedy_labels(w)); }

Partition solve_heuristic(const CorrelationMatrix& w, std::uint64_t seed) {
  return Partition(LocalSearch(w, greedy_labels(w), seed).run());
}

Partition solve(const CorrelationMatrix& w, std::size_t exact_limit, std::uint64_t seed) {
  return w.size() <= exact_limit ? solve_exact(w, exact_limit) : solve_heuristic(w, seed);
}

bool verify_transitivity(const Partition& p) {
  std::vector<std::vector<int>> incidence(p.size(), std::vector<int>(p.size(), 0));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j) incidence[i][j] = p.together(i, j) ? 1 : 0;
  return verify_transitivity(incidence);
}

bool verify_transitivity(const std::vector<std::vector<int>>& x) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == i || k == j) continue;
        if (x[i][j] + x[j][k] > 1 + x[i][k]) return false;
      }
    }
  return true;
}

}  // namespace mtmc
