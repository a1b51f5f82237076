#include "mtmc/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

namespace mtmc {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) { return std::mt19937_64(splitmix(seed ^ splitmix(salt))); }

double to_real(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw DataError("bad value for " + key + ": " + v);
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw DataError("bad value for " + key + ": " + v);
  return out;
}

bool apply_world_key(WorldSpec& s, const std::string& key, const std::string& v) {
  if (key == "camera_count") s.camera_count = static_cast<int>(to_integer(key, v));
  else if (key == "identity_count") s.identity_count = static_cast<int>(to_integer(key, v));
  else if (key == "duration_s") s.duration_s = to_real(key, v);
  else if (key == "fps") s.fps = static_cast<int>(to_integer(key, v));
  else if (key == "region_width") s.region_width = to_real(key, v);
  else if (key == "region_height") s.region_height = to_real(key, v);
  else if (key == "gap_width") s.gap_width = to_real(key, v);
  else if (key == "edge_margin") s.edge_margin = to_real(key, v);
  else if (key == "speed_min") s.speed_min = to_real(key, v);
  else if (key == "speed_max") s.speed_max = to_real(key, v);
  else if (key == "speed_limit") s.speed_limit = to_real(key, v);
  else if (key == "turn_rate") s.turn_rate = to_real(key, v);
  else if (key == "gap_turn_rate") s.gap_turn_rate = to_real(key, v);
  else if (key == "reverse_probability") s.reverse_probability = to_real(key, v);
  else if (key == "max_heading_deg") s.max_heading_deg = to_real(key, v);
  else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_integer(key, v));
  else return false;
  return true;
}

bool apply_noise_key(NoiseSpec& s, const std::string& key, const std::string& v) {
  if (key == "dim") s.dim = static_cast<int>(to_integer(key, v));
  else if (key == "sigma") s.sigma = to_real(key, v);
  else if (key == "outlier_fraction") s.outlier_fraction = to_real(key, v);
  else if (key == "miss_rate") s.miss_rate = to_real(key, v);
  else if (key == "false_positive_rate") s.false_positive_rate = to_real(key, v);
  else if (key == "box_sigma") s.box_sigma = to_real(key, v);
  else return false;
  return true;
}

struct Walker {
  double x, y, vx, vy;
};

}  // namespace

double WorldSpec::corridor_length() const { return camera_count * region_width + (camera_count - 1) * gap_width; }

double WorldSpec::region_start(int camera) const { return camera * (region_width + gap_width); }

int WorldSpec::camera_at(double x) const {
  if (x < 0.0 || x > corridor_length()) return -1;
  int c = std::min(static_cast<int>(std::floor(x / (region_width + gap_width))), camera_count - 1);
  return x - region_start(c) <= region_width ? c : -1;
}

void WorldSpec::validate() const {
  if (camera_count < 1) throw DataError("camera_count must be positive");
  if (identity_count < 0) throw DataError("identity_count must be non-negative");
  if (!(duration_s >= 0.0)) throw DataError("duration_s must be non-negative");
  if (fps <= 0) throw DataError("fps must be positive");
  if (!(region_width > 0.0 && region_height > 1.0)) throw DataError("region must be at least 1 m tall and have positive width");
  if (!(gap_width > 0.0) && camera_count > 1) throw DataError("gap_width must be positive");
  if (!(edge_margin >= 0.0 && 2.0 * edge_margin < region_width)) throw DataError("edge_margin must fit twice inside a region");
  if (!(speed_min > 0.0 && speed_min <= speed_max)) throw DataError("need 0 < speed_min <= speed_max");
  if (!(speed_limit > 0.0)) throw DataError("speed_limit must be positive");
  if (speed_max > speed_limit)
    throw DataError("infeasible transit: speed_max " + format_real(speed_max) + " exceeds speed_limit " + format_real(speed_limit));
  if (!(turn_rate >= 0.0 && gap_turn_rate >= 0.0)) throw DataError("turn rates must be non-negative");
  if (!(reverse_probability >= 0.0 && reverse_probability <= 1.0)) throw DataError("reverse_probability must lie in [0,1]");
  if (!(max_heading_deg >= 0.0 && max_heading_deg < 60.0)) throw DataError("max_heading_deg must lie in [0,60)");
}

WorldSpec parse_world_spec(const std::string& text, WorldSpec base) {
  for (const auto& [key, value] : parse_key_values(text))
    if (!apply_world_key(base, key, value)) throw DataError("unknown world key: " + key);
  base.validate();
  return base;
}

void NoiseSpec::validate() const {
  if (dim < 1) throw DataError("embedding dim must be positive");
  if (!(sigma >= 0.0) || !(box_sigma >= 0.0)) throw DataError("noise spreads must be non-negative");
  for (double r : {outlier_fraction, miss_rate, false_positive_rate})
    if (!(r >= 0.0 && r <= 1.0)) throw DataError("noise rates must lie in [0,1]");
}

NoiseSpec parse_noise_spec(const std::string& text, NoiseSpec base) {
  for (const auto& [key, value] : parse_key_values(text))
    if (!apply_noise_key(base, key, value)) throw DataError("unknown noise key: " + key);
  base.validate();
  return base;
}

void load_specs(const std::filesystem::path& path, WorldSpec* world, NoiseSpec* noise) {
  WorldSpec w = world ? *world : WorldSpec{};
  NoiseSpec n = noise ? *noise : NoiseSpec{};
  for (const auto& [key, value] : parse_key_values(read_text_file(path))) {
    bool used = apply_world_key(w, key, value);
    used = apply_noise_key(n, key, value) || used;
    if (!used) throw DataError(path.string() + ": unknown key " + key);
  }
  if (world) {
    w.validate();
    *world = w;
  }
  if (noise) {
    n.validate();
    *noise = n;
  }
}

Box project_box(const WorldSpec& spec, int camera, const WorldPoint& world) {
  double px = (world.x - spec.region_start(camera)) / spec.region_width * kImageWidth;
  double py = world.y / spec.region_height * kImageHeight;
  return {px - kBoxWidth / 2.0, py - kBoxHeight, kBoxWidth, kBoxHeight};
}

std::vector<Trajectory> generate_world(const WorldSpec& spec) {
  spec.validate();
  const double length = spec.corridor_length();
  const double height = spec.region_height;
  const double margin = spec.edge_margin;
  const double y_low = 0.5, y_high = height - 0.5;
  const double max_heading = spec.max_heading_deg * std::numbers::pi / 180.0;
  const std::int64_t frames = seconds_to_frames(spec.duration_s, spec.fps);
  const double dt = 1.0 / spec.fps;

  auto in_safe_zone = [&](double x) {
    int c = spec.camera_at(x);
    if (c < 0) return false;
    double start = spec.region_start(c);
    return (c == 0 || x - start >= margin) && (c == spec.camera_count - 1 || start + spec.region_width - x >= margin);
  };
  auto safe_start = [&](int c) { return spec.region_start(c) + (c == 0 ? 0.0 : margin); };
  auto safe_end = [&](int c) { return spec.region_start(c) + spec.region_width - (c == spec.camera_count - 1 ? 0.0 : margin); };
  // Meters along the current x direction until the walker enters a safe zone
  // other than the one it stands in, or reaches a corridor end.
  auto horizon = [&](double x, double direction) {
    int here = in_safe_zone(x) ? spec.camera_at(x) : -1;
    if (direction > 0) {
      for (int c = 0; c < spec.camera_count; ++c)
        if (c != here && safe_start(c) > x) return safe_start(c) - x;
      return length - x;
    }
    for (int c = spec.camera_count - 1; c >= 0; --c)
      if (c != here && safe_end(c) < x) return x - safe_end(c);
    return x;
  };
  // Keeps y inside the corridor until the next chance to turn.
  auto clear_walls = [&](Walker& w) {
    if (w.vx == 0.0) {
      w.vy = 0.0;
      return;
    }
    double t = horizon(w.x, w.vx) / std::abs(w.vx);
    auto ok = [&] {
      double y_end = w.y + w.vy * t;
      return y_end >= y_low && y_end <= y_high;
    };
    if (ok()) return;
    w.vy = -w.vy;
    if (!ok()) w.vy = 0.0;
  };

  std::vector<Trajectory> out;
  for (int id = 0; id < spec.identity_count; ++id) {
    std::mt19937_64 rng = stream(spec.seed, static_cast<std::uint64_t>(id) + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto new_velocity = [&](double direction) {
      double speed = spec.speed_min + (spec.speed_max - spec.speed_min) * unit(rng);
      double heading = (2.0 * unit(rng) - 1.0) * max_heading;
      return std::pair{direction * speed * std::cos(heading), speed * std::sin(heading)};
    };
    Walker w{length * unit(rng), 1.0 + (height - 2.0) * unit(rng), 0.0, 0.0};
    std::tie(w.vx, w.vy) = new_velocity(unit(rng) < 0.5 ? 1.0 : -1.0);
    clear_walls(w);

    Trajectory t;
    t.identity = id;
    const double turn_probability = spec.turn_rate * dt;
    const double gap_turn_probability = spec.gap_turn_rate * dt;
    for (std::int64_t f = 0; f < frames; ++f) {
      int camera = spec.camera_at(w.x);
      if (camera >= 0) {
        Detection d;
        d.camera = camera;
        d.frame = f;
        d.world = {w.x, w.y};
        d.box = project_box(spec, camera, d.world);
        t.detections.push_back(d);
      }
      // Draw every frame so the random stream does not depend on position.
      double turn_draw = unit(rng);
      double reverse_draw = unit(rng);
      auto [nvx, nvy] = new_velocity(1.0);
      if (in_safe_zone(w.x)) {
        if (turn_draw < turn_probability) {
          double direction = (w.vx >= 0 ? 1.0 : -1.0) * (reverse_draw < spec.reverse_probability ? -1.0 : 1.0);
          w.vx = direction * nvx;
          w.vy = nvy;
        }
        clear_walls(w);
      } else if (camera < 0 && turn_draw < gap_turn_probability) {
        w.vx = (w.vx >= 0 ? 1.0 : -1.0) * nvx;
        w.vy = nvy;
        clear_walls(w);
      }
      w.x += w.vx * dt;
      w.y += w.vy * dt;
      if (w.x < 0.0) w.x = -w.x, w.vx = -w.vx;
      if (w.x > length) w.x = 2.0 * length - w.x, w.vx = -w.vx;
      if (w.y < 0.0) w.y = -w.y, w.vy = -w.vy;
      if (w.y > height) w.y = 2.0 * height - w.y, w.vy = -w.vy;
    }
    if (!t.detections.empty()) out.push_back(std::move(t));
  }
  return out;
}

EmbeddingMatrix identity_means(int identity_count, int dim, std::uint64_t seed) {
  std::mt19937_64 rng = stream(seed, 0x6d65616e73ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingMatrix means(identity_count, dim);
  for (int i = 0; i < identity_count; ++i) {
    Eigen::VectorXd v(dim);
    for (int k = 0; k < dim; ++k) v(k) = normal(rng);
    v.normalize();
    means.row(i) = v.transpose().cast<float>();
  }
  return means;
}

Observations degrade(const std::vector<Trajectory>& truth, const WorldSpec& world, const NoiseSpec& noise, std::uint64_t seed) {
  world.validate();
  noise.validate();
  int identity_count = 2;
  for (const auto& t : truth) {
    if (t.identity < 0) throw DataError("negative identity in ground truth");
    identity_count = std::max(identity_count, t.identity + 1);
  }
  const EmbeddingMatrix means = identity_means(identity_count, noise.dim, seed);
  std::mt19937_64 miss_rng = stream(seed, 1), box_rng = stream(seed, 2), embed_rng = stream(seed, 3), clutter_rng = stream(seed, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Clutter passes its burst's source identity directly.
  auto sample_embedding = [&](int identity, int clutter_source = -1) {
    bool outlier = unit(embed_rng) < noise.outlier_fraction;
    double pick = unit(embed_rng);
    int source = identity;
    if (identity < 0) {
      source = clutter_source;
    } else if (outlier) {
      source = std::min(static_cast<int>(pick * (identity_count - 1)), identity_count - 2);
      if (source >= identity) ++source;
    }
    Eigen::VectorXf row = means.row(source).transpose();
    for (int k = 0; k < noise.dim; ++k) row(k) += static_cast<float>(noise.sigma * normal(embed_rng));
    return row;
  };

  struct Record {
    Detection detection;
    int label;
    Eigen::VectorXf embedding;
  };
  std::vector<Record> records;
  for (const auto& t : truth) {
    for (const auto& d : t.detections) {
      bool missed = unit(miss_rng) < noise.miss_rate;
      double jx = normal(box_rng), jy = normal(box_rng);
      Eigen::VectorXf e = sample_embedding(t.identity);
      if (missed) continue;
      Detection out = d;
      out.box.x += noise.box_sigma * jx;
      out.box.y += noise.box_sigma * jy;
      out.embedding_index.reset();
      out.interpolated = false;
      records.push_back({out, t.identity, std::move(e)});
    }
  }

  const std::int64_t frames = seconds_to_frames(world.duration_s, world.fps);
  const int max_burst = std::max(1, world.fps / 4);
  for (int c = 0; c < world.camera_count; ++c) {
    for (std::int64_t f = 0; f < frames; ++f) {
      if (!(unit(clutter_rng) < noise.false_positive_rate)) continue;
      int burst = 1 + static_cast<int>(unit(clutter_rng) * max_burst);
      burst = std::min(burst, max_burst);
      WorldPoint p{world.region_start(c) + world.region_width * unit(clutter_rng), world.region_height * unit(clutter_rng)};
      int source = std::min(static_cast<int>(unit(clutter_rng) * identity_count), identity_count - 1);
      for (int k = 0; k < burst && f + k < frames; ++k) {
        Detection d;
        d.camera = c;
        d.frame = f + k;
        d.world = p;
        d.box = project_box(world, c, p);
        d.box.x += noise.box_sigma * normal(clutter_rng);
        d.box.y += noise.box_sigma * normal(clutter_rng);
        records.push_back({d, -1, sample_embedding(-1, source)});
      }
    }
  }

  std::stable_sort(records.begin(), records.end(), [](const Record& a, const Record& b) {
    return std::tie(a.detection.camera, a.detection.frame) < std::tie(b.detection.camera, b.detection.frame);
  });
  Observations obs;
  obs.truth = truth;
  obs.embeddings.rows.resize(static_cast<Eigen::Index>(records.size()), noise.dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].detection.embedding_index = i;
    obs.detections.push_back(records[i].detection);
    obs.labels.push_back(records[i].label);
    obs.embeddings.rows.row(static_cast<Eigen::Index>(i)) = records[i].embedding.transpose();
  }
  return obs;
}

EmbeddingSet labeled_rows(const EmbeddingSet& embeddings, const std::vector<int>& labels) {
  if (labels.size() != embeddings.count()) throw DataError("labels do not cover every embedding row");
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) keep.push_back(static_cast<Eigen::Index>(i));
  EmbeddingSet out;
  out.rows.resize(static_cast<Eigen::Index>(keep.size()), embeddings.rows.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.rows.row(static_cast<Eigen::Index>(i)) = embeddings.rows.row(keep[i]);
    out.identity.push_back(labels[static_cast<std::size_t>(keep[i])]);
  }
  return out;
}

ClusterData make_clusters(const ClusterSpec& spec, std::uint64_t center_seed) {
  if (spec.identity_count < 2 || spec.samples_per_identity < 1) throw DataError("need at least 2 identities with samples");
  if (spec.signal_dim < 1 || spec.signal_dim > spec.input_dim) throw DataError("signal_dim must lie in [1, input_dim]");
  if (!(spec.label_noise >= 0.0 && spec.label_noise <= 1.0)) throw DataError("label_noise must lie in [0,1]");
  std::mt19937_64 center_rng = stream(center_seed, 0x63656e74ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd centers(spec.identity_count, spec.signal_dim);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (Eigen::Index k = 0; k < centers.cols(); ++k) centers(i, k) = normal(center_rng);

  std::mt19937_64 rng = stream(spec.seed, 0x73616d70ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.identity_count * spec.samples_per_identity;
  ClusterData out;
  out.data.rows.resize(n, spec.input_dim);
  for (int id = 0, row = 0; id < spec.identity_count; ++id) {
    for (int s = 0; s < spec.samples_per_identity; ++s, ++row) {
      for (int k = 0; k < spec.input_dim; ++k) {
        double v = k < spec.signal_dim ? centers(id, k) + spec.signal_spread * normal(rng) : spec.nuisance_sigma * normal(rng);
        out.data.rows(row, k) = static_cast<float>(v);
      }
      out.true_labels.push_back(id);
      int label = id;
      double flip = unit(rng);
      int other = static_cast<int>(unit(rng) * (spec.identity_count - 1));
      if (flip < spec.label_noise) label = other >= id ? other + 1 : other;
      out.data.identity.push_back(std::min(label, spec.identity_count - 1));
    }
  }
  return out;
}

}  // namespace mtmc
