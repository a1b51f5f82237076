#include "mtmc/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "mtmc/parallel.hpp"

namespace mtmc {

CorrelationMatrix::CorrelationMatrix(std::size_t n)
    : n_(n), values_(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))), forbidden_(n * n, 0) {}

CorrelationMatrix::CorrelationMatrix(const Eigen::MatrixXd& values) : CorrelationMatrix(static_cast<std::size_t>(values.rows())) {
  if (values.rows() != values.cols()) throw DataError("correlation matrix must be square");
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j) {
      if (values(idx(i), idx(j)) != values(idx(j), idx(i))) throw DataError("correlation matrix must be symmetric");
      set(i, j, values(idx(i), idx(j)));
    }
}

void CorrelationMatrix::set(std::size_t i, std::size_t j, double v) {
  if (!std::isfinite(v)) throw DataError("correlations must be finite; use forbid() for impossible pairs");
  values_(idx(i), idx(j)) = v;
  values_(idx(j), idx(i)) = v;
}

void CorrelationMatrix::forbid(std::size_t i, std::size_t j) {
  forbidden_[i * n_ + j] = 1;
  forbidden_[j * n_ + i] = 1;
  values_(idx(i), idx(j)) = 0.0;
  values_(idx(j), idx(i)) = 0.0;
}

CorrelationMatrix CorrelationMatrix::scaled(double factor) const {
  CorrelationMatrix out = *this;
  out.values_ *= factor;
  return out;
}

std::string CorrelationMatrix::to_text() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (j) out << ' ';
      if (i == j) out << '-';
      else if (forbidden(i, j)) out << 'F';
      else out << format_real(value(i, j));
    }
    out << '\n';
  }
  return out.str();
}

void MotionParams::validate() const {
  if (!(alpha > 0.0) || !(beta >= 0.0) || !(t_m > 0.0) || !(speed_limit > 0.0))
    throw DataError("motion parameters require alpha > 0, beta >= 0, t_m > 0, speed_limit > 0");
}

MotionParams motion_params(const ScenarioConfig& config) {
  return MotionParams{config.t_m, config.alpha, config.speed_limit, config.beta};
}

AppearanceCalibration AppearanceCalibration::from_means(double mu_p, double mu_n) {
  if (!(mu_p < mu_n)) throw DataError("inseparable embedding: mu_p=" + format_real(mu_p) + " >= mu_n=" + format_real(mu_n));
  AppearanceCalibration c{mu_p, mu_n, 0.5 * (mu_p + mu_n)};
  if (!(c.t_a > 0.0)) throw DataError("t_a must be positive");
  return c;
}

AppearanceCalibration calibrate_appearance(const EmbeddingSet& embeddings, std::size_t max_pairs, std::uint64_t seed) {
  if (!embeddings.labeled()) throw DataError("appearance calibration needs labeled embeddings");
  embeddings.validate();
  if (max_pairs == 0) throw DataError("max_pairs must be positive");
  const auto& x = embeddings.rows;
  auto dist = [&](std::size_t i, std::size_t j) {
    return (x.row(static_cast<Eigen::Index>(i)).cast<double>() - x.row(static_cast<Eigen::Index>(j)).cast<double>()).norm();
  };

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < embeddings.count(); ++i) groups[embeddings.identity[i]].push_back(i);
  if (groups.size() < 2) throw DataError("appearance calibration needs at least two identities");

  std::vector<const std::vector<std::size_t>*> members;
  std::vector<std::uint64_t> cumulative;  // positive pairs before each group
  std::uint64_t positive_total = 0;
  for (const auto& [id, rows] : groups) {
    members.push_back(&rows);
    cumulative.push_back(positive_total);
    positive_total += rows.size() * (rows.size() - 1) / 2;
  }
  const std::uint64_t n = embeddings.count();
  const std::uint64_t negative_total = n * (n - 1) / 2 - positive_total;
  if (positive_total == 0) throw DataError("appearance calibration needs at least one positive pair");

  std::mt19937_64 rng(seed);
  double positive_sum = 0.0;
  std::uint64_t positive_count = 0;
  if (positive_total <= max_pairs) {
    for (const auto* rows : members)
      for (std::size_t a = 0; a < rows->size(); ++a)
        for (std::size_t b = a + 1; b < rows->size(); ++b) positive_sum += dist((*rows)[a], (*rows)[b]);
    positive_count = positive_total;
  } else {
    std::uniform_int_distribution<std::uint64_t> pick(0, positive_total - 1);
    for (std::size_t s = 0; s < max_pairs; ++s) {
      std::uint64_t k = pick(rng);
      std::size_t g = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), k) - cumulative.begin()) - 1;
      std::uint64_t local = k - cumulative[g];
      // Decode local index into (a, b), a < b, walking rows of the triangle.
      std::uint64_t m = members[g]->size();
      std::uint64_t a = 0;
      while (local >= m - 1 - a) {
        local -= m - 1 - a;
        ++a;
      }
      std::uint64_t b = a + 1 + local;
      positive_sum += dist((*members[g])[a], (*members[g])[b]);
    }
    positive_count = max_pairs;
  }

  double negative_sum = 0.0;
  std::uint64_t negative_count = 0;
  if (negative_total <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (embeddings.identity[i] != embeddings.identity[j]) negative_sum += dist(i, j);
    negative_count = negative_total;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (negative_count < max_pairs) {
      std::size_t i = pick(rng);
      std::size_t j = pick(rng);
      if (i == j || embeddings.identity[i] == embeddings.identity[j]) continue;
      negative_sum += dist(i, j);
      ++negative_count;
    }
  }
  return AppearanceCalibration::from_means(positive_sum / static_cast<double>(positive_count),
                                           negative_sum / static_cast<double>(negative_count));
}

double appearance_correlation(double distance, const AppearanceCalibration& calibration) {
  return (calibration.t_a - distance) / calibration.t_a;
}

namespace {

struct LineFit {
  double intercept_x, slope_x, intercept_y, slope_y;  // position = intercept + slope * seconds

  WorldPoint at(double t) const { return {intercept_x + slope_x * t, intercept_y + slope_y * t}; }
};

LineFit fit_line(std::span<const TimedPoint> points, int fps) {
  const double n = static_cast<double>(points.size());
  if (points.size() == 1) return {points[0].world.x, 0.0, points[0].world.y, 0.0};
  // Center time on the first sample for conditioning.
  const double t0 = static_cast<double>(points.front().frame) / fps;
  double st = 0, sx = 0, sy = 0;
  for (const auto& p : points) {
    st += static_cast<double>(p.frame) / fps - t0;
    sx += p.world.x;
    sy += p.world.y;
  }
  const double mt = st / n, mx = sx / n, my = sy / n;
  double stt = 0, stx = 0, sty = 0;
  for (const auto& p : points) {
    double dt = static_cast<double>(p.frame) / fps - t0 - mt;
    stt += dt * dt;
    stx += dt * (p.world.x - mx);
    sty += dt * (p.world.y - my);
  }
  double vx = stt > 0 ? stx / stt : 0.0;
  double vy = stt > 0 ? sty / stt : 0.0;
  double tc = t0 + mt;
  return {mx - vx * tc, vx, my - vy * tc, vy};
}

// True when walking the union of both sorted fragments never needs more than speed_limit.
bool merged_feasible(std::span<const TimedPoint> a, std::span<const TimedPoint> b, int fps, double speed_limit) {
  std::size_t i = 0, j = 0;
  const TimedPoint* previous = nullptr;
  while (i < a.size() || j < b.size()) {
    const TimedPoint* next = (j >= b.size() || (i < a.size() && a[i].frame <= b[j].frame)) ? &a[i++] : &b[j++];
    if (previous) {
      double gap = static_cast<double>(next->frame - previous->frame) / fps;
      double d = distance(previous->world, next->world);
      if (gap <= 0.0 ? d > 0.0 : d > speed_limit * gap) return false;
    }
    previous = next;
  }
  return true;
}

double mean_embedding_distance(const EmbeddingMatrix& x, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  double sum = 0.0;
  for (auto i : a)
    for (auto j : b)
      sum += (x.row(static_cast<Eigen::Index>(i)).cast<double>() - x.row(static_cast<Eigen::Index>(j)).cast<double>()).norm();
  return sum / static_cast<double>(a.size() * b.size());
}

}  // namespace

MotionEvidence motion_error(std::span<const TimedPoint> earlier, std::span<const TimedPoint> later, int fps,
                            double speed_limit) {
  if (earlier.empty() || later.empty()) throw DataError("motion_error needs nonempty fragments");
  if (fps <= 0) throw DataError("fps must be positive");
  if (earlier.back().frame >= later.front().frame) throw DataError("overlapping fragments");
  const double gap = static_cast<double>(later.front().frame - earlier.back().frame) / fps;
  if (distance(earlier.back().world, later.front().world) > speed_limit * gap) return {true, 0.0};

  const std::size_t window = static_cast<std::size_t>(fps);
  auto tail = earlier.subspan(earlier.size() - std::min(earlier.size(), window));
  auto head = later.first(std::min(later.size(), window));
  LineFit forward = fit_line(tail, fps);
  LineFit backward = fit_line(head, fps);
  const double start_time = static_cast<double>(later.front().frame) / fps;
  const double end_time = static_cast<double>(earlier.back().frame) / fps;
  double e_f = distance(forward.at(start_time), later.front().world);
  double e_b = distance(backward.at(end_time), earlier.back().world);
  return {false, e_f + e_b};
}

std::optional<double> motion_correlation(const MotionEvidence& evidence, const MotionParams& params) {
  if (evidence.impossible) return std::nullopt;
  return params.alpha * (params.t_m - evidence.error);
}

double decay_factor(double dt_seconds, double beta) { return std::exp(-beta * dt_seconds); }

CorrelationMatrix combine(const CorrelationMatrix& appearance, const CorrelationMatrix& motion, const Eigen::MatrixXd& decay) {
  const std::size_t n = appearance.size();
  if (motion.size() != n || static_cast<std::size_t>(decay.rows()) != n || static_cast<std::size_t>(decay.cols()) != n)
    throw DataError("combine: shape mismatch");
  CorrelationMatrix out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (appearance.forbidden(i, j) || motion.forbidden(i, j)) {
        out.forbid(i, j);
        continue;
      }
      double d = decay(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!(d >= 0.0 && d <= 1.0)) throw DataError("decay entries must lie in [0,1]");
      out.set(i, j, (appearance.value(i, j) + motion.value(i, j)) * d);
    }
  return out;
}

std::vector<std::size_t> representative_positions(std::size_t count, std::size_t limit) {
  std::vector<std::size_t> out;
  if (count == 0 || limit == 0) return out;
  if (count <= limit) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(i);
    return out;
  }
  if (limit == 1) return {count / 2};
  for (std::size_t k = 0; k < limit; ++k) out.push_back((k * (count - 1) + (limit - 1) / 2) / (limit - 1));
  return out;
}

CorrelationParts correlation_parts(std::span<const Fragment> fragments, const EmbeddingMatrix& embeddings,
                                   const AppearanceCalibration& calibration, const MotionParams& params, int fps,
                                   int threads) {
  params.validate();
  const std::size_t n = fragments.size();
  for (const auto& f : fragments) {
    if (f.points.empty() || f.appearance_rows.empty()) throw DataError("fragment without points or appearance rows");
    for (auto r : f.appearance_rows)
      if (r >= static_cast<std::size_t>(embeddings.rows())) throw DataError("appearance row out of range");
  }
  CorrelationParts parts{CorrelationMatrix(n), CorrelationMatrix(n),
                         Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};

  struct PairResult {
    double appearance = 0.0;
    double motion = 0.0;
    bool forbidden = false;
    double dt = 0.0;
  };
  std::vector<std::vector<PairResult>> rows(n);
  parallel_for(n, threads, [&](std::size_t i) {
    rows[i].resize(n);
    const Fragment& a = fragments[i];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Fragment& b = fragments[j];
      PairResult& r = rows[i][j];
      r.appearance = appearance_correlation(mean_embedding_distance(embeddings, a.appearance_rows, b.appearance_rows), calibration);
      const Fragment* earlier = nullptr;
      const Fragment* later = nullptr;
      if (a.points.back().frame < b.points.front().frame) earlier = &a, later = &b;
      else if (b.points.back().frame < a.points.front().frame) earlier = &b, later = &a;
      if (earlier) {
        MotionEvidence ev = motion_error(earlier->points, later->points, fps, params.speed_limit);
        auto w = motion_correlation(ev, params);
        if (!w) {
          r.forbidden = true;
        } else if (earlier->points.size() >= 2 && later->points.size() >= 2) {
          r.motion = *w;
        }
        r.dt = static_cast<double>(later->points.front().frame - earlier->points.back().frame) / fps;
      } else {
        r.forbidden = !merged_feasible(a.points, b.points, fps, params.speed_limit);
      }
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const PairResult& r = rows[i][j];
      parts.appearance.set(i, j, r.appearance);
      if (r.forbidden) parts.motion.forbid(i, j);
      else parts.motion.set(i, j, r.motion);
      double d = decay_factor(r.dt, params.beta);
      parts.decay(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
      parts.decay(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
  return parts;
}

CorrelationMatrix build_correlation(std::span<const Fragment> fragments, const EmbeddingMatrix& embeddings,
                                    const AppearanceCalibration& calibration, const MotionParams& params, int fps,
                                    int threads) {
  CorrelationParts parts = correlation_parts(fragments, embeddings, calibration, params, fps, threads);
  return combine(parts.appearance, parts.motion, parts.decay);
}

MotionParams select_motion_params(std::span<const MotionParams> grid, const std::function<double(const MotionParams&)>& score) {
  if (grid.empty()) throw DataError("empty motion parameter grid");
  std::size_t best = 0;
  double best_score = score(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    double s = score(grid[i]);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return grid[best];
}

}  // namespace mtmc
