#include "mtmc/study.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "mtmc/correlation.hpp"
#include "mtmc/synth.hpp"
#include "mtmc/tracker.hpp"

namespace mtmc {

std::vector<std::vector<std::size_t>> single_camera_truth(const std::vector<Detection>& detections, const std::vector<int>& labels,
                                                          int fps) {
  if (labels.size() != detections.size()) throw DataError("labels do not cover every detection");
  std::map<int, std::vector<std::size_t>> by_identity;
  for (std::size_t i = 0; i < detections.size(); ++i)
    if (labels[i] >= 0) by_identity[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> pieces;
  for (auto& [id, rows] : by_identity) {
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return std::tie(detections[a].frame, detections[a].camera) < std::tie(detections[b].frame, detections[b].camera);
    });
    std::vector<std::size_t> current;
    for (auto r : rows) {
      if (!current.empty()) {
        const Detection& last = detections[current.back()];
        if (last.camera != detections[r].camera || detections[r].frame - last.frame > fps) {
          pieces.push_back(std::move(current));
          current.clear();
        }
      }
      current.push_back(r);
    }
    if (!current.empty()) pieces.push_back(std::move(current));
  }
  return pieces;
}

std::vector<StudyRow> tracking_vs_rank_study(const std::vector<EmbeddingSet>& checkpoints, const std::vector<Detection>& detections,
                                             const std::vector<int>& labels, const ScenarioConfig& config,
                                             const StudyOptions& options) {
  if (checkpoints.size() < 2) throw DataError("the study needs at least two checkpoints");
  if (labels.size() != detections.size()) throw DataError("labels do not cover every detection");
  for (const auto& c : checkpoints) {
    c.validate();
    for (const auto& d : detections)
      if (!d.embedding_index || *d.embedding_index >= c.count()) throw DataError("checkpoint lacks a detection's embedding row");
  }

  // Frozen single-camera truth over the labeled detections only.
  std::vector<Detection> kept;
  std::vector<int> kept_labels;
  for (std::size_t i = 0; i < detections.size(); ++i)
    if (labels[i] >= 0) {
      kept.push_back(detections[i]);
      kept_labels.push_back(labels[i]);
    }
  const auto pieces = single_camera_truth(kept, kept_labels, config.fps);
  std::map<int, Trajectory> truth_by_id;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    auto& t = truth_by_id[kept_labels[i]];
    t.identity = kept_labels[i];
    t.detections.push_back(kept[i]);
  }
  std::vector<Trajectory> truth;
  for (auto& [id, t] : truth_by_id) {
    std::stable_sort(t.detections.begin(), t.detections.end(),
                     [](const Detection& a, const Detection& b) { return std::tie(a.frame, a.camera) < std::tie(b.frame, b.camera); });
    truth.push_back(std::move(t));
  }

  // Fixed pair sample for sign accuracy.
  std::mt19937_64 rng(options.seed ^ 0x7369676eULL);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (kept.size() >= 2) {
    std::uniform_int_distribution<std::size_t> pick(0, kept.size() - 1);
    while (pairs.size() < options.sign_pairs) {
      std::size_t a = pick(rng), b = pick(rng);
      if (a != b) pairs.emplace_back(a, b);
    }
  }

  std::vector<StudyRow> rows;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const EmbeddingSet& features = checkpoints[c];
    auto row_of = [&](std::size_t i) { return features.rows.row(static_cast<Eigen::Index>(*kept[i].embedding_index)).cast<double>(); };
    StudyRow out;
    out.checkpoint = c;

    AppearanceCalibration calibration =
        calibrate_appearance(labeled_rows(features, labels), options.calibration_pairs, options.seed);

    std::size_t correct = 0;
    for (auto [a, b] : pairs) {
      double w = appearance_correlation((row_of(a) - row_of(b)).norm(), calibration);
      bool same = kept_labels[a] == kept_labels[b];
      correct += same ? w > 0.0 : w < 0.0;
    }
    out.sign_accuracy = pairs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pairs.size());

    out.rank1 = cross_camera_rank(features, detections, labels, options.gallery_stride, options.max_queries, options.seed).rank1;

    ScenarioConfig run = config;
    run.t_a = calibration.t_a;
    Tracker tracker(kept, features.rows, run);
    for (const auto& piece : pieces) tracker.add_entity(piece);
    tracker.run_multi_camera();
    out.idf1 = id_measures(truth, tracker.trajectories()).idf1;
    rows.push_back(out);
  }
  return rows;
}

RankResult cross_camera_rank(const EmbeddingSet& features, const std::vector<Detection>& detections, const std::vector<int>& labels,
                             int stride, std::size_t max_queries, std::uint64_t seed) {
  if (labels.size() != detections.size()) throw DataError("labels do not cover every detection");
  std::vector<std::size_t> gallery;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (labels[i] < 0 || detections[i].frame % std::max(1, stride) != 0) continue;
    if (!detections[i].embedding_index || *detections[i].embedding_index >= features.count())
      throw DataError("detection " + std::to_string(i) + " has no embedding row");
    gallery.push_back(i);
  }
  std::map<int, std::set<int>> cameras_of;
  for (auto g : gallery) cameras_of[labels[g]].insert(detections[g].camera);
  std::vector<std::size_t> queries;
  for (auto g : gallery)
    if (cameras_of[labels[g]].size() >= 2) queries.push_back(g);
  if (queries.empty()) throw DataError("no identity appears in two cameras; nothing to rank");
  std::mt19937_64 rng(seed ^ 0x72616e6bULL);
  std::shuffle(queries.begin(), queries.end(), rng);
  if (queries.size() > max_queries) queries.resize(max_queries);
  std::sort(queries.begin(), queries.end());

  std::vector<int> gallery_ids, gallery_cams, query_ids, query_cams;
  for (auto g : gallery) gallery_ids.push_back(labels[g]), gallery_cams.push_back(detections[g].camera);
  for (auto q : queries) query_ids.push_back(labels[q]), query_cams.push_back(detections[q].camera);
  auto row_of = [&](std::size_t i) { return features.rows.row(static_cast<Eigen::Index>(*detections[i].embedding_index)).cast<double>(); };
  Eigen::MatrixXd dist(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(gallery.size()));
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t g = 0; g < gallery.size(); ++g)
      dist(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(g)) = (row_of(queries[q]) - row_of(gallery[g])).norm();
  return rank_map(dist, query_ids, gallery_ids, query_cams, gallery_cams);
}

double held_out_rank1(const ToyEmbedder& embedder, const ClusterData& held_out) {
  const EmbeddingSet& data = held_out.data;
  Eigen::MatrixXd embedded = embedder.embed(data.rows.cast<double>());
  std::map<int, int> seen;
  std::vector<Eigen::Index> queries, gallery;
  for (std::size_t i = 0; i < held_out.true_labels.size(); ++i)
    (seen[held_out.true_labels[i]]++ % 2 == 0 ? queries : gallery).push_back(static_cast<Eigen::Index>(i));
  Eigen::MatrixXd dist(static_cast<Eigen::Index>(queries.size()), static_cast<Eigen::Index>(gallery.size()));
  std::vector<int> query_ids, gallery_ids;
  for (auto q : queries) query_ids.push_back(held_out.true_labels[static_cast<std::size_t>(q)]);
  for (auto g : gallery) gallery_ids.push_back(held_out.true_labels[static_cast<std::size_t>(g)]);
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t g = 0; g < gallery.size(); ++g)
      dist(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(g)) = (embedded.row(queries[q]) - embedded.row(gallery[g])).norm();
  return rank_map(dist, query_ids, gallery_ids, std::vector<int>(queries.size(), 0), std::vector<int>(gallery.size(), 1)).rank1;
}

std::vector<LossDemoRow> loss_demo(const ClusterData& train, const ClusterData& held_out, TrainConfig config, int iterations,
                                   const std::vector<WeightScheme>& schemes) {
  const ToyEmbedder initial(static_cast<int>(train.data.dim()), config.embed_dim, config.seed ^ 0x696e6974ULL);
  std::vector<LossDemoRow> rows;
  for (WeightScheme scheme : schemes) {
    LossDemoRow row;
    row.scheme = scheme;
    config.scheme = scheme;
    try {
      TrainResult r = train_toy_embedder(train.data, config, iterations, initial);
      row.trace = std::move(r.trace);
      row.rank1 = held_out_rank1(r.embedder, held_out);
    } catch (const DivergenceError& e) {
      row.diverged = true;
      row.diverged_at = e.iteration();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_loss_demo(const std::vector<LossDemoRow>& rows) {
  std::ostringstream s;
  for (const auto& r : rows) {
    s << "# scheme=" << to_string(r.scheme);
    if (r.diverged) s << " diverged_at=" << r.diverged_at << '\n';
    else s << " rank1=" << format_real(r.rank1) << '\n' << format_loss_trace(r.trace);
  }
  return s.str();
}

std::string format_study(const std::vector<StudyRow>& rows) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(4);
  s << "# checkpoint rank1 sign_accuracy idf1\n";
  for (const auto& r : rows) s << r.checkpoint << ' ' << r.rank1 << ' ' << r.sign_accuracy << ' ' << r.idf1 << '\n';
  return s.str();
}

}  // namespace mtmc
