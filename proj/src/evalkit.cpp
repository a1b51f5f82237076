#include "mtmc/evalkit.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace mtmc {

double intersection_over_union(const Box& a, const Box& b) {
  double x0 = std::max(a.x, b.x);
  double y0 = std::max(a.y, b.y);
  double x1 = std::min(a.x + a.width, b.x + b.width);
  double y1 = std::min(a.y + a.height, b.y + b.height);
  double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  double uni = a.width * a.height + b.width * b.height - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchCounts match_counts(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& computed, double iou_threshold) {
  MatchCounts out;
  std::map<int, std::size_t> truth_index, computed_index;
  for (const auto& t : truth) truth_index.emplace(t.identity, 0);
  for (const auto& c : computed) computed_index.emplace(c.identity, 0);
  for (auto& [id, k] : truth_index) {
    k = out.truth_ids.size();
    out.truth_ids.push_back(id);
  }
  for (auto& [id, k] : computed_index) {
    k = out.computed_ids.size();
    out.computed_ids.push_back(id);
  }
  out.truth_sizes.assign(out.truth_ids.size(), 0);
  out.computed_sizes.assign(out.computed_ids.size(), 0);
  out.matches.assign(out.truth_ids.size(), std::vector<long long>(out.computed_ids.size(), 0));

  using Key = std::pair<int, std::int64_t>;  // camera, frame
  std::map<Key, std::vector<std::pair<std::size_t, Box>>> truth_at;
  std::set<std::tuple<int, std::int64_t, int>> seen;
  for (const auto& t : truth) {
    std::size_t row = truth_index.at(t.identity);
    for (const auto& d : t.detections) {
      if (!seen.emplace(d.camera, d.frame, t.identity).second)
        throw DataError("duplicate ground-truth boxes for identity " + std::to_string(t.identity) + " on camera " +
                        std::to_string(d.camera) + " frame " + std::to_string(d.frame));
      truth_at[{d.camera, d.frame}].emplace_back(row, d.box);
      ++out.truth_sizes[row];
    }
  }
  std::set<std::tuple<int, std::int64_t, std::size_t, std::size_t>> counted;
  for (const auto& c : computed) {
    std::size_t col = computed_index.at(c.identity);
    for (const auto& d : c.detections) {
      ++out.computed_sizes[col];
      auto it = truth_at.find({d.camera, d.frame});
      if (it == truth_at.end()) continue;
      for (const auto& [row, box] : it->second) {
        if (intersection_over_union(box, d.box) < iou_threshold) continue;
        if (counted.emplace(d.camera, d.frame, row, col).second) ++out.matches[row][col];
      }
    }
  }
  return out;
}

std::vector<int> max_weight_assignment(const std::vector<std::vector<long long>>& weights) {
  const std::size_t rows = weights.size();
  const std::size_t cols = rows ? weights[0].size() : 0;
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;
  const std::size_t n = std::max(rows, cols);
  long long top = 0;
  for (const auto& r : weights)
    for (long long w : r) top = std::max(top, w);
  auto cost = [&](std::size_t i, std::size_t j) -> long long {
    long long w = (i < rows && j < cols) ? weights[i][j] : 0;
    return top - w;
  };
  // Hungarian algorithm with potentials, 1-based with a virtual column 0.
  const long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<long long> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      long long delta = inf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        long long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] >= 1 && p[j] - 1 < rows && j - 1 < cols) result[p[j] - 1] = static_cast<int>(j - 1);
  return result;
}

IdMeasures id_measures(const std::vector<Trajectory>& truth, const std::vector<Trajectory>& computed, double iou_threshold) {
  MatchCounts counts = match_counts(truth, computed, iou_threshold);
  std::vector<int> assignment = max_weight_assignment(counts.matches);

  IdMeasures m;
  long long total_truth = std::accumulate(counts.truth_sizes.begin(), counts.truth_sizes.end(), 0LL);
  long long total_computed = std::accumulate(counts.computed_sizes.begin(), counts.computed_sizes.end(), 0LL);
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    if (assignment[r] < 0) continue;
    long long w = counts.matches[r][static_cast<std::size_t>(assignment[r])];
    if (w == 0) continue;
    m.mapping.pairs.emplace_back(counts.truth_ids[r], counts.computed_ids[static_cast<std::size_t>(assignment[r])]);
    m.mapping.idtp += w;
  }
  m.mapping.idfn = total_truth - m.mapping.idtp;
  m.mapping.idfp = total_computed - m.mapping.idtp;

  auto ratio = [&](long long num, long long den, const char* name) {
    if (den == 0) {
      m.warnings.push_back(std::string(name) + " has an empty denominator; reporting 0");
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.idp = ratio(m.mapping.idtp, m.mapping.idtp + m.mapping.idfp, "IDP");
  m.idr = ratio(m.mapping.idtp, m.mapping.idtp + m.mapping.idfn, "IDR");
  m.idf1 = ratio(2 * m.mapping.idtp, 2 * m.mapping.idtp + m.mapping.idfp + m.mapping.idfn, "IDF1");
  return m;
}

RankResult rank_map(const Eigen::MatrixXd& distances, const std::vector<int>& query_ids, const std::vector<int>& gallery_ids,
                    const std::vector<int>& query_cameras, const std::vector<int>& gallery_cameras) {
  const auto nq = static_cast<std::size_t>(distances.rows());
  const auto ng = static_cast<std::size_t>(distances.cols());
  if (query_ids.size() != nq || query_cameras.size() != nq || gallery_ids.size() != ng || gallery_cameras.size() != ng)
    throw DataError("rank_map: id/camera vectors do not match the distance matrix");
  if (!distances.allFinite()) throw DataError("rank_map: non-finite distance");

  RankResult r;
  std::vector<std::size_t> missing;
  std::size_t hits1 = 0, hits5 = 0, hits10 = 0;
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<std::size_t> valid;
    for (std::size_t g = 0; g < ng; ++g)
      if (!(gallery_ids[g] == query_ids[q] && gallery_cameras[g] == query_cameras[q])) valid.push_back(g);
    std::stable_sort(valid.begin(), valid.end(), [&](std::size_t a, std::size_t b) {
      return distances(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(a)) <
             distances(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(b));
    });
    std::size_t found = 0;
    double precision_sum = 0.0;
    std::size_t first = valid.size();
    for (std::size_t k = 0; k < valid.size(); ++k) {
      if (gallery_ids[valid[k]] != query_ids[q]) continue;
      if (first == valid.size()) first = k;
      ++found;
      precision_sum += static_cast<double>(found) / static_cast<double>(k + 1);
    }
    if (found == 0) {
      missing.push_back(q);
      continue;
    }
    hits1 += first < 1;
    hits5 += first < 5;
    hits10 += first < 10;
    double ap = precision_sum / static_cast<double>(found);
    r.average_precision.push_back(ap);
    ap_sum += ap;
    r.order.push_back(std::move(valid));
  }
  if (!missing.empty()) {
    std::string list;
    for (auto q : missing) list += (list.empty() ? "" : ",") + std::to_string(q);
    throw DataError("queries without a valid positive in the gallery: " + list);
  }
  if (nq > 0) {
    r.rank1 = static_cast<double>(hits1) / static_cast<double>(nq);
    r.rank5 = static_cast<double>(hits5) / static_cast<double>(nq);
    r.rank10 = static_cast<double>(hits10) / static_cast<double>(nq);
    r.mean_ap = ap_sum / static_cast<double>(nq);
  }
  return r;
}

namespace {
std::string fixed4(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(4);
  s << v;
  return s.str();
}
}  // namespace

std::string format_id_measures(const IdMeasures& m, bool csv) {
  std::ostringstream out;
  if (csv) {
    out << "idf1,idp,idr,idtp,idfp,idfn\n"
        << fixed4(m.idf1) << ',' << fixed4(m.idp) << ',' << fixed4(m.idr) << ',' << m.mapping.idtp << ','
        << m.mapping.idfp << ',' << m.mapping.idfn << '\n';
  } else {
    out << "IDF1=" << fixed4(m.idf1) << "\nIDP=" << fixed4(m.idp) << "\nIDR=" << fixed4(m.idr) << "\nIDTP=" << m.mapping.idtp
        << "\nIDFP=" << m.mapping.idfp << "\nIDFN=" << m.mapping.idfn << '\n';
  }
  return out.str();
}

std::string format_rank(const RankResult& r, bool csv) {
  std::ostringstream out;
  if (csv) {
    out << "rank1,rank5,rank10,mAP\n" << fixed4(r.rank1) << ',' << fixed4(r.rank5) << ',' << fixed4(r.rank10) << ','
        << fixed4(r.mean_ap) << '\n';
  } else {
    out << "rank1=" << fixed4(r.rank1) << "\nrank5=" << fixed4(r.rank5) << "\nrank10=" << fixed4(r.rank10)
        << "\nmAP=" << fixed4(r.mean_ap) << '\n';
  }
  return out.str();
}

}  // namespace mtmc
