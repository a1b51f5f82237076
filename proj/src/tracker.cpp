#include "mtmc/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "mtmc/evalkit.hpp"
#include "mtmc/parallel.hpp"

namespace mtmc {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t v : {a, b, c}) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 31;
  }
  return h;
}

}  // namespace

WindowPlan window_plan(Level level, const ScenarioConfig& config) {
  WindowPlan plan;
  plan.level = level;
  double seconds = level == Level::tracklet ? config.window_tracklet_s
                   : level == Level::single_camera ? config.window_sc_s
                                                   : config.window_mc_s;
  plan.width = std::max<std::int64_t>(1, seconds_to_frames(seconds, config.fps));
  if (level == Level::tracklet) {
    plan.stride = plan.width;
    plan.disjoint = true;
  } else {
    plan.stride = std::max<std::int64_t>(1, seconds_to_frames(seconds * (1.0 - config.overlap_fraction), config.fps));
    plan.disjoint = plan.stride >= plan.width;
  }
  return plan;
}

std::vector<std::pair<std::int64_t, std::int64_t>> plan_windows(const WindowPlan& plan, std::int64_t first, std::int64_t last) {
  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  if (last < first) return out;
  // First aligned start whose window still reaches `first`.
  std::int64_t k = (first - plan.width) / plan.stride + 1;
  while (k > 0 && (k - 1) * plan.stride + plan.width > first) --k;
  for (std::int64_t start = std::max<std::int64_t>(0, k) * plan.stride; start <= last; start += plan.stride)
    if (start + plan.width > first) out.emplace_back(start, start + plan.width);
  return out;
}

Tracker::Tracker(std::vector<Detection> detections, EmbeddingMatrix embeddings, ScenarioConfig config, LogSink log)
    : detections_(std::move(detections)),
      embeddings_(std::move(embeddings)),
      config_(config),
      motion_(motion_params(config)),
      calibration_{0.0, 0.0, config.t_a},
      log_(std::move(log)) {
  config_.validate();
  motion_.validate();
  if (!embeddings_.allFinite()) throw DataError("non-finite embedding value");
  for (std::size_t i = 0; i < detections_.size(); ++i) {
    const Detection& d = detections_[i];
    std::string where = "detection " + std::to_string(i) + " (camera " + std::to_string(d.camera) + ", frame " + std::to_string(d.frame) + ")";
    if (!d.embedding_index || *d.embedding_index >= static_cast<std::size_t>(embeddings_.rows()))
      throw DataError(where + " has no embedding row");
    if (d.camera < 0 || d.camera >= config_.camera_count)
      throw DataError(where + " names a camera outside camera_count=" + std::to_string(config_.camera_count));
    if (d.frame < 0) throw DataError(where + " has a negative frame");
  }
  by_camera_.resize(static_cast<std::size_t>(config_.camera_count));
  for (std::size_t i = 0; i < detections_.size(); ++i) by_camera_[static_cast<std::size_t>(detections_[i].camera)].push_back(i);
  for (auto& list : by_camera_)
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) { return detections_[a].frame < detections_[b].frame; });
  if (!detections_.empty()) {
    auto [lo, hi] = std::minmax_element(detections_.begin(), detections_.end(),
                                        [](const Detection& a, const Detection& b) { return a.frame < b.frame; });
    first_frame_ = lo->frame;
    last_frame_ = hi->frame;
  }
}

std::string Tracker::log_line(Level level, std::int64_t start, std::int64_t end, std::size_t nodes, int clusters) {
  std::ostringstream s;
  s << "level=" << static_cast<int>(level) << " window=[" << start << ',' << end << ") nodes=" << nodes << " clusters=" << clusters;
  return s.str();
}

void Tracker::emit(const std::string& line) const {
  if (log_) log_(line);
}

std::vector<int> Tracker::cameras() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < by_camera_.size(); ++c)
    if (!by_camera_[c].empty()) out.push_back(static_cast<int>(c));
  return out;
}

int Tracker::find_group(int group) const {
  std::lock_guard lock(groups_mutex_);
  int root = group;
  while (parent_[static_cast<std::size_t>(root)] != root) root = parent_[static_cast<std::size_t>(root)];
  while (parent_[static_cast<std::size_t>(group)] != root) {
    int next = parent_[static_cast<std::size_t>(group)];
    parent_[static_cast<std::size_t>(group)] = root;
    group = next;
  }
  return root;
}

void Tracker::unite_groups(int a, int b) {
  int ra = find_group(a), rb = find_group(b);
  std::lock_guard lock(groups_mutex_);
  if (ra == rb) return;
  if (rb < ra) std::swap(ra, rb);
  parent_[static_cast<std::size_t>(rb)] = ra;
}

Fragment Tracker::fragment_of(const std::vector<std::size_t>& detection_indices) const {
  Fragment f;
  f.points.reserve(detection_indices.size());
  for (auto i : detection_indices) f.points.push_back({detections_[i].frame, detections_[i].world});
  for (auto p : representative_positions(detection_indices.size()))
    f.appearance_rows.push_back(*detections_[detection_indices[p]].embedding_index);
  return f;
}

bool Tracker::shares_slot(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const Detection& da = detections_[a[i]];
    const Detection& db = detections_[b[j]];
    if (da.frame < db.frame) {
      ++i;
    } else if (db.frame < da.frame) {
      ++j;
    } else {
      // Compare every camera pair within this frame.
      std::size_t i_end = i, j_end = j;
      while (i_end < a.size() && detections_[a[i_end]].frame == da.frame) ++i_end;
      while (j_end < b.size() && detections_[b[j_end]].frame == da.frame) ++j_end;
      for (std::size_t x = i; x < i_end; ++x)
        for (std::size_t y = j; y < j_end; ++y)
          if (detections_[a[x]].camera == detections_[b[y]].camera) return true;
      i = i_end;
      j = j_end;
    }
  }
  return false;
}

bool Tracker::has_detection_in(const std::vector<std::size_t>& members, std::int64_t start, std::int64_t end) const {
  auto it = std::lower_bound(members.begin(), members.end(), start,
                             [&](std::size_t m, std::int64_t f) { return detections_[m].frame < f; });
  return it != members.end() && detections_[*it].frame < end;
}

std::vector<std::size_t> Tracker::sorted_union(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) const {
  std::vector<std::size_t> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out), [&](std::size_t x, std::size_t y) {
    return std::tie(detections_[x].frame, detections_[x].camera, x) < std::tie(detections_[y].frame, detections_[y].camera, y);
  });
  return out;
}

Partition Tracker::solve_nodes(const Nodes& nodes, std::uint64_t salt, int threads) const {
  std::vector<Fragment> fragments;
  fragments.reserve(nodes.size());
  for (const auto& n : nodes) fragments.push_back(fragment_of(n));
  CorrelationMatrix w = build_correlation(fragments, embeddings_, calibration_, motion_, config_.fps, threads);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = i + 1; j < nodes.size(); ++j)
      if (!w.forbidden(i, j) && shares_slot(nodes[i], nodes[j])) w.forbid(i, j);
  return solve(w, static_cast<std::size_t>(config_.exact_limit), mix(config_.seed, salt, nodes.size(), 0));
}

Tracker::Nodes Tracker::cluster_detections(int camera, std::int64_t start, std::int64_t end, int threads, std::string* line) const {
  const auto& list = by_camera_[static_cast<std::size_t>(camera)];
  auto lo = std::lower_bound(list.begin(), list.end(), start, [&](std::size_t m, std::int64_t f) { return detections_[m].frame < f; });
  auto hi = std::lower_bound(lo, list.end(), end, [&](std::size_t m, std::int64_t f) { return detections_[m].frame < f; });
  Nodes nodes;
  for (auto it = lo; it != hi; ++it) nodes.push_back({*it});
  if (nodes.empty()) return {};
  Partition p = solve_nodes(nodes, mix(1, static_cast<std::uint64_t>(camera), static_cast<std::uint64_t>(start), 0), threads);

  // One body per frame: keep the detection with the highest summed score to
  // the rest of its cluster and split the others out.
  Nodes clusters;
  for (const auto& members : p.clusters()) {
    std::map<std::int64_t, std::vector<std::size_t>> by_frame;
    for (auto m : members) by_frame[detections_[nodes[m].front()].frame].push_back(m);
    bool conflict = std::any_of(by_frame.begin(), by_frame.end(), [](const auto& kv) { return kv.second.size() > 1; });
    if (!conflict) {
      std::vector<std::size_t> c;
      for (auto m : members) c.push_back(nodes[m].front());
      clusters.push_back(std::move(c));
      continue;
    }
    Nodes local;
    for (auto m : members) local.push_back(nodes[m]);
    std::vector<Fragment> frs;
    for (const auto& n : local) frs.push_back(fragment_of(n));
    CorrelationMatrix w = build_correlation(frs, embeddings_, calibration_, motion_, config_.fps, 1);
    std::vector<std::size_t> keep;
    std::vector<std::size_t> position(nodes.size());
    for (std::size_t k = 0; k < members.size(); ++k) position[members[k]] = k;
    for (const auto& [frame, candidates] : by_frame) {
      if (candidates.size() == 1) {
        keep.push_back(candidates.front());
        continue;
      }
      std::size_t best = candidates.front();
      double best_score = -std::numeric_limits<double>::infinity();
      for (auto c : candidates) {
        double s = 0.0;
        for (auto m : members)
          if (detections_[nodes[m].front()].frame != frame) s += w.score(position[c], position[m]);
        if (s > best_score) best_score = s, best = c;
      }
      for (auto c : candidates) {
        if (c == best) keep.push_back(c);
        else clusters.push_back({nodes[c].front()});
      }
    }
    std::sort(keep.begin(), keep.end());
    std::vector<std::size_t> c;
    for (auto m : keep) c.push_back(nodes[m].front());
    clusters.push_back(std::move(c));
  }
  // Clusters in order of their earliest detection.
  std::sort(clusters.begin(), clusters.end(), [&](const auto& a, const auto& b) {
    return std::tie(detections_[a.front()].frame, a.front()) < std::tie(detections_[b.front()].frame, b.front());
  });
  if (line) *line = log_line(Level::tracklet, start, end, nodes.size(), static_cast<int>(clusters.size()));
  return clusters;
}

void Tracker::create_tracklets(int camera, const Nodes& clusters) {
  for (const auto& c : clusters) {
    Entity e;
    e.id = next_id_++;
    e.camera = camera;
    e.group = e.id;
    e.members = c;
    std::stable_sort(e.members.begin(), e.members.end(), [&](std::size_t a, std::size_t b) { return detections_[a].frame < detections_[b].frame; });
    entities_.push_back(std::move(e));
    parent_.push_back(entities_.back().id);
  }
}

void Tracker::tracklet_stage(int camera, std::int64_t start, std::int64_t end) {
  if (camera < 0 || camera >= config_.camera_count) throw DataError("camera outside camera_count");
  std::string line;
  Nodes clusters = cluster_detections(camera, start, end, config_.threads, &line);
  if (clusters.empty()) return;
  create_tracklets(camera, clusters);
  emit(line);
}

int Tracker::add_entity(std::vector<std::size_t> detection_indices) {
  if (detection_indices.empty()) throw DataError("entity without detections");
  for (auto i : detection_indices)
    if (i >= detections_.size()) throw DataError("entity references a missing detection");
  int camera = detections_[detection_indices.front()].camera;
  std::stable_sort(detection_indices.begin(), detection_indices.end(),
                   [&](std::size_t a, std::size_t b) { return detections_[a].frame < detections_[b].frame; });
  for (std::size_t k = 0; k < detection_indices.size(); ++k) {
    if (detections_[detection_indices[k]].camera != camera) throw DataError("entity spans more than one camera");
    if (k > 0 && detections_[detection_indices[k]].frame == detections_[detection_indices[k - 1]].frame)
      throw DataError("entity repeats a frame");
  }
  create_tracklets(camera, {detection_indices});
  return entities_.back().id;
}

void Tracker::sc_stage(int camera, std::int64_t start, std::int64_t end, int threads, std::vector<std::string>& lines) {
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < entities_.size(); ++k) {
    const Entity& e = entities_[k];
    if (e.camera == camera && e.alive && has_detection_in(e.members, start, end)) live.push_back(k);
  }
  if (live.empty()) return;
  Nodes nodes;
  for (auto k : live) nodes.push_back(entities_[k].members);
  Partition p = solve_nodes(nodes, mix(2, static_cast<std::uint64_t>(camera), static_cast<std::uint64_t>(start), 0), threads);
  for (const auto& cluster : p.clusters()) {
    if (cluster.size() < 2) continue;
    // entities_ is in creation order, so the first member holds the oldest id.
    Entity& keep = entities_[live[cluster.front()]];
    for (std::size_t m = 1; m < cluster.size(); ++m) {
      Entity& other = entities_[live[cluster[m]]];
      keep.members = sorted_union(keep.members, other.members);
      other.members.clear();
      other.alive = false;
      unite_groups(keep.group, other.group);
    }
  }
  lines.push_back(log_line(Level::single_camera, start, end, nodes.size(), p.cluster_count()));
}

void Tracker::sc_trajectory_stage(int camera, std::int64_t start, std::int64_t end) {
  if (camera < 0 || camera >= config_.camera_count) throw DataError("camera outside camera_count");
  std::vector<std::string> lines;
  sc_stage(camera, start, end, config_.threads, lines);
  for (const auto& l : lines) emit(l);
}

void Tracker::mc_trajectory_stage(std::int64_t start, std::int64_t end) {
  std::map<int, std::vector<std::size_t>> groups;  // root -> alive entity positions
  for (std::size_t k = 0; k < entities_.size(); ++k)
    if (entities_[k].alive) groups[find_group(entities_[k].group)].push_back(k);
  std::vector<int> roots;
  Nodes nodes;
  for (const auto& [root, members] : groups) {
    bool inside = std::any_of(members.begin(), members.end(), [&](std::size_t k) { return has_detection_in(entities_[k].members, start, end); });
    if (!inside) continue;
    std::vector<std::size_t> all;
    for (auto k : members) all = sorted_union(all, entities_[k].members);
    roots.push_back(root);
    nodes.push_back(std::move(all));
  }
  if (nodes.empty()) return;
  Partition p = solve_nodes(nodes, mix(3, static_cast<std::uint64_t>(start), 0, 0), config_.threads);
  for (const auto& cluster : p.clusters())
    for (std::size_t m = 1; m < cluster.size(); ++m) unite_groups(roots[cluster.front()], roots[cluster[m]]);
  emit(log_line(Level::multi_camera, start, end, nodes.size(), p.cluster_count()));
}

void Tracker::run_tracklets() {
  auto windows = plan_windows(window_plan(Level::tracklet, config_), first_frame_, last_frame_);
  std::vector<int> cams = cameras();
  struct Job {
    int camera;
    std::int64_t start, end;
    Nodes clusters;
    std::string line;
  };
  std::vector<Job> jobs;
  for (const auto& [s, e] : windows)
    for (int c : cams) jobs.push_back({c, s, e, {}, {}});
  parallel_for(jobs.size(), config_.threads,
               [&](std::size_t i) { jobs[i].clusters = cluster_detections(jobs[i].camera, jobs[i].start, jobs[i].end, 1, &jobs[i].line); });
  for (const auto& job : jobs) {
    if (job.clusters.empty()) continue;
    create_tracklets(job.camera, job.clusters);
    emit(job.line);
  }
}

void Tracker::run_single_camera() {
  auto windows = plan_windows(window_plan(Level::single_camera, config_), first_frame_, last_frame_);
  std::vector<int> cams = cameras();
  std::vector<std::vector<std::string>> lines(cams.size());
  parallel_for(cams.size(), config_.threads, [&](std::size_t i) {
    for (const auto& [s, e] : windows) sc_stage(cams[i], s, e, 1, lines[i]);
  });
  for (const auto& camera_lines : lines)
    for (const auto& l : camera_lines) emit(l);
}

void Tracker::run_multi_camera() {
  for (const auto& [s, e] : plan_windows(window_plan(Level::multi_camera, config_), first_frame_, last_frame_)) mc_trajectory_stage(s, e);
}

std::vector<Trajectory> Tracker::trajectories() const {
  std::map<int, std::vector<std::size_t>> groups;
  for (const auto& e : entities_)
    if (e.alive) {
      auto& g = groups[find_group(e.group)];
      g = sorted_union(g, e.members);
    }
  std::vector<Trajectory> out;
  for (const auto& [root, members] : groups) {
    Trajectory t;
    t.identity = root;
    for (auto i : members) t.detections.push_back(detections_[i]);
    out.push_back(std::move(t));
  }
  return out;
}

std::size_t Tracker::entity_count() const {
  return static_cast<std::size_t>(std::count_if(entities_.begin(), entities_.end(), [](const Entity& e) { return e.alive; }));
}

Trajectory interpolate(const Trajectory& trajectory, int fps) {
  std::map<int, std::vector<const Detection*>> per_camera;
  for (const auto& d : trajectory.detections) per_camera[d.camera].push_back(&d);
  Trajectory out;
  out.identity = trajectory.identity;
  out.detections = trajectory.detections;
  for (const auto& [camera, list] : per_camera) {
    for (std::size_t k = 1; k < list.size(); ++k) {
      const Detection& a = *list[k - 1];
      const Detection& b = *list[k];
      const std::int64_t gap = b.frame - a.frame;
      if (gap <= 1 || gap > fps) continue;
      for (std::int64_t f = a.frame + 1; f < b.frame; ++f) {
        double u = static_cast<double>(f - a.frame) / static_cast<double>(gap);
        auto lerp = [u](double x, double y) { return x + (y - x) * u; };
        Detection d;
        d.camera = camera;
        d.frame = f;
        d.box = {lerp(a.box.x, b.box.x), lerp(a.box.y, b.box.y), lerp(a.box.width, b.box.width), lerp(a.box.height, b.box.height)};
        d.world = {lerp(a.world.x, b.world.x), lerp(a.world.y, b.world.y)};
        d.interpolated = true;
        out.detections.push_back(d);
      }
    }
  }
  std::stable_sort(out.detections.begin(), out.detections.end(),
                   [](const Detection& x, const Detection& y) { return std::tie(x.frame, x.camera) < std::tie(y.frame, y.camera); });
  return out;
}

std::vector<Trajectory> prune(const std::vector<Trajectory>& trajectories, int min_length) {
  std::vector<Trajectory> out;
  for (const auto& t : trajectories) {
    std::map<int, int> originals;
    for (const auto& d : t.detections)
      if (!d.interpolated) ++originals[d.camera];
    bool keep = min_length <= 0 || std::any_of(originals.begin(), originals.end(), [&](const auto& kv) { return kv.second >= min_length; });
    if (keep) out.push_back(t);
  }
  return out;
}

std::vector<Trajectory> run_pipeline(const std::vector<Detection>& detections, const EmbeddingMatrix& embeddings,
                                     const ScenarioConfig& config, LogSink log) {
  Tracker tracker(detections, embeddings, config, std::move(log));
  tracker.run_tracklets();
  tracker.run_single_camera();
  tracker.run_multi_camera();
  std::vector<Trajectory> out;
  for (const auto& t : tracker.trajectories()) out.push_back(interpolate(t, config.fps));
  return prune(out, config.min_length_frames());
}

ScenarioConfig with_motion(ScenarioConfig config, const MotionParams& params) {
  config.t_m = params.t_m;
  config.alpha = params.alpha;
  config.beta = params.beta;
  config.speed_limit = params.speed_limit;
  return config;
}

MotionCalibration calibrate_motion(const std::vector<Detection>& detections, const EmbeddingMatrix& embeddings,
                                   const std::vector<Trajectory>& truth, std::span<const MotionParams> grid,
                                   const ScenarioConfig& config) {
  MotionCalibration out;
  out.best = select_motion_params(grid, [&](const MotionParams& params) {
    double idf1 = id_measures(truth, run_pipeline(detections, embeddings, with_motion(config, params))).idf1;
    out.idf1.push_back(idf1);
    return idf1;
  });
  return out;
}

}  // namespace mtmc
