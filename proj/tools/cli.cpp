#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "mtmc/clustering.hpp"
#include "mtmc/correlation.hpp"
#include "mtmc/evalkit.hpp"
#include "mtmc/loss.hpp"
#include "mtmc/model.hpp"
#include "mtmc/study.hpp"
#include "mtmc/synth.hpp"
#include "mtmc/tracker.hpp"

namespace mtmc {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::optional<int> threads;

  ScenarioConfig config() const {
    ScenarioConfig c;
    if (!config_path.empty()) c = load_config(config_path);
    if (seed) c.seed = *seed;
    c.threads = threads ? *threads : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    if (c.threads < 1) throw DataError("--threads must be at least 1");
    return c;
  }
};

WorldSpec load_world(const std::string& path, const Globals& g) {
  WorldSpec w;
  if (!path.empty()) w = parse_world_spec(read_text_file(path));
  if (g.seed) w.seed = *g.seed;
  w.validate();
  return w;
}

NoiseSpec load_noise(const std::string& path) {
  NoiseSpec n;
  if (!path.empty()) n = parse_noise_spec(read_text_file(path));
  return n;
}

std::vector<int> checked_labels(const std::string& path, std::size_t rows) {
  std::vector<int> labels = read_labels(path);
  if (labels.size() != rows)
    throw DataError(path + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " embedding rows");
  return labels;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-camera tracking by correlation clustering, with triplet-loss and evaluation tools", "mtmc"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  int threads_value = 1;
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (overrides config files)");
  app.add_option("--config", g.config_path, "Scenario config (key=value)")->check(CLI::ExistingFile);
  auto* threads_opt = app.add_option("--threads", threads_value, "Worker threads (default: available cores)");

  // generate
  auto* generate = app.add_subcommand("generate", "Generate a synthetic ground-truth world");
  std::string world_path, truth_out;
  generate->add_option("--world", world_path, "World spec (key=value)")->check(CLI::ExistingFile);
  generate->add_option("--truth", truth_out, "Ground-truth trajectory file to write")->required();

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "Turn ground truth into noisy detections and embeddings");
  std::string noise_path, truth_in, detections_out, embeddings_out, labels_out;
  degrade_cmd->add_option("--world", world_path, "World spec (key=value)")->check(CLI::ExistingFile);
  degrade_cmd->add_option("--noise", noise_path, "Noise spec (key=value)")->check(CLI::ExistingFile);
  degrade_cmd->add_option("--truth", truth_in, "Ground-truth trajectory file")->required()->check(CLI::ExistingFile);
  degrade_cmd->add_option("--detections", detections_out, "Detection file to write")->required();
  degrade_cmd->add_option("--embeddings", embeddings_out, "Embedding file to write")->required();
  degrade_cmd->add_option("--labels", labels_out, "Per-detection identity labels to write (-1 = clutter)");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Fit t_a from labeled embeddings and pick motion parameters on a grid");
  std::string embeddings_in, labels_in, detections_in, config_out;
  std::size_t max_pairs = 20000;
  std::vector<double> grid_t_m, grid_alpha, grid_beta;
  calibrate->add_option("--embeddings", embeddings_in, "Training embeddings")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--labels", labels_in, "Training labels")->required()->check(CLI::ExistingFile);
  calibrate->add_option("--max-pairs", max_pairs, "Pairs sampled per class");
  calibrate->add_option("--detections", detections_in, "Training detections (enables motion calibration)")->check(CLI::ExistingFile);
  calibrate->add_option("--truth", truth_in, "Training ground truth (enables motion calibration)")->check(CLI::ExistingFile);
  calibrate->add_option("--t-m", grid_t_m, "Grid values for t_m")->delimiter(',');
  calibrate->add_option("--alpha", grid_alpha, "Grid values for alpha")->delimiter(',');
  calibrate->add_option("--beta", grid_beta, "Grid values for beta")->delimiter(',');
  calibrate->add_option("--out", config_out, "Scenario config to write")->required();

  // track
  auto* track = app.add_subcommand("track", "Run the three-level tracker");
  std::string tracks_out, log_out;
  track->add_option("--detections", detections_in, "Detection file")->required()->check(CLI::ExistingFile);
  track->add_option("--embeddings", embeddings_in, "Embedding file")->required()->check(CLI::ExistingFile);
  track->add_option("--out", tracks_out, "Trajectory file to write")->required();
  track->add_option("--log", log_out, "Progress log file to write");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "IDF1 / IDP / IDR of computed trajectories");
  std::string computed_in;
  double iou = 0.5;
  bool csv = false;
  evaluate->add_option("--truth", truth_in, "Ground-truth trajectory file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--computed", computed_in, "Computed trajectory file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--iou", iou, "IoU threshold for a detection match")->check(CLI::Range(0.0, 1.0));
  evaluate->add_flag("--csv", csv, "Comma-separated output");

  // rank
  auto* rank = app.add_subcommand("rank", "Cross-camera rank-k and mAP of embeddings");
  int stride = 30;
  std::size_t max_queries = 300;
  rank->add_option("--embeddings", embeddings_in, "Embedding file")->required()->check(CLI::ExistingFile);
  rank->add_option("--labels", labels_in, "Per-detection labels")->required()->check(CLI::ExistingFile);
  rank->add_option("--detections", detections_in, "Detection file (cameras and frames)")->required()->check(CLI::ExistingFile);
  rank->add_option("--stride", stride, "Gallery keeps frames divisible by this")->check(CLI::PositiveNumber);
  rank->add_option("--max-queries", max_queries, "Query cap");
  rank->add_flag("--csv", csv, "Comma-separated output");

  // loss-demo
  auto* demo = app.add_subcommand("loss-demo", "Compare triplet weightings on a toy embedder");
  int iterations = 800;
  ClusterSpec clusters;
  clusters.label_noise = 0.05;
  std::string kind_name = "squared_euclidean", trace_out;
  demo->add_option("--iterations", iterations, "Training iterations")->check(CLI::PositiveNumber);
  demo->add_option("--identities", clusters.identity_count, "Identities")->check(CLI::Range(2, 100000));
  demo->add_option("--samples", clusters.samples_per_identity, "Samples per identity")->check(CLI::PositiveNumber);
  demo->add_option("--label-noise", clusters.label_noise, "Fraction of mislabeled training rows")->check(CLI::Range(0.0, 1.0));
  demo->add_option("--kind", kind_name, "euclidean or squared_euclidean");
  demo->add_option("--out", trace_out, "Loss traces to write")->required();

  // study
  auto* study = app.add_subcommand("study", "Tracking accuracy versus ranking accuracy over embedding checkpoints");
  std::vector<double> sigmas;
  std::string table_out;
  study->add_option("--world", world_path, "World spec (key=value)")->check(CLI::ExistingFile);
  study->add_option("--noise", noise_path, "Noise spec; sigma is replaced per checkpoint")->check(CLI::ExistingFile);
  study->add_option("--sigmas", sigmas, "Embedding spread per checkpoint")->required()->delimiter(',')->expected(2, 1000);
  study->add_option("--out", table_out, "Table to write")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;
  if (threads_opt->count() > 0) g.threads = threads_value;

  try {
    if (generate->parsed()) {
      WorldSpec world = load_world(world_path, g);
      auto truth = generate_world(world);
      write_trajectories(truth, truth_out);
      out << "trajectories=" << truth.size() << '\n';
    } else if (degrade_cmd->parsed()) {
      WorldSpec world = load_world(world_path, g);
      NoiseSpec noise = load_noise(noise_path);
      Observations obs = degrade(parse_ground_truth(truth_in), world, noise, g.seed.value_or(0));
      write_detections(obs.detections, detections_out);
      write_embeddings(obs.embeddings, embeddings_out);
      if (!labels_out.empty()) write_labels(obs.labels, labels_out);
      out << "detections=" << obs.detections.size() << '\n';
    } else if (calibrate->parsed()) {
      ScenarioConfig config = g.config();
      EmbeddingSet embeddings = read_embeddings(embeddings_in);
      std::vector<int> labels = checked_labels(labels_in, embeddings.count());
      AppearanceCalibration calibration = calibrate_appearance(labeled_rows(embeddings, labels), max_pairs, config.seed);
      config.t_a = calibration.t_a;
      out << "mu_p=" << format_real(calibration.mu_p) << "\nmu_n=" << format_real(calibration.mu_n)
          << "\nt_a=" << format_real(calibration.t_a) << '\n';
      if (!detections_in.empty() || !truth_in.empty()) {
        if (detections_in.empty() || truth_in.empty()) throw CLI::ValidationError("motion calibration needs both --detections and --truth");
        if (grid_t_m.empty()) grid_t_m = {config.t_m};
        if (grid_alpha.empty()) grid_alpha = {config.alpha};
        if (grid_beta.empty()) grid_beta = {config.beta};
        std::vector<MotionParams> grid;
        for (double t_m : grid_t_m)
          for (double alpha : grid_alpha)
            for (double beta : grid_beta) grid.push_back({t_m, alpha, config.speed_limit, beta});
        auto result = calibrate_motion(parse_detections(detections_in, config.fps), embeddings.rows, parse_ground_truth(truth_in), grid, config);
        for (std::size_t i = 0; i < grid.size(); ++i)
          out << "grid t_m=" << format_real(grid[i].t_m) << " alpha=" << format_real(grid[i].alpha) << " beta=" << format_real(grid[i].beta)
              << " idf1=" << format_real(result.idf1[i]) << '\n';
        config = with_motion(config, result.best);
        out << "t_m=" << format_real(config.t_m) << "\nalpha=" << format_real(config.alpha) << "\nbeta=" << format_real(config.beta) << '\n';
      }
      write_text(config_out, format_config(config));
    } else if (track->parsed()) {
      ScenarioConfig config = g.config();
      auto detections = parse_detections(detections_in, config.fps);
      EmbeddingSet embeddings = read_embeddings(embeddings_in);
      std::string log;
      auto trajectories = run_pipeline(detections, embeddings.rows, config, [&](const std::string& line) { log += line + '\n'; });
      write_trajectories(trajectories, tracks_out);
      if (!log_out.empty()) write_text(log_out, log);
      out << "trajectories=" << trajectories.size() << '\n';
    } else if (evaluate->parsed()) {
      IdMeasures m = id_measures(parse_ground_truth(truth_in), parse_ground_truth(computed_in), iou);
      for (const auto& w : m.warnings) err << "warning: " << w << '\n';
      out << format_id_measures(m, csv);
    } else if (rank->parsed()) {
      ScenarioConfig config = g.config();
      EmbeddingSet embeddings = read_embeddings(embeddings_in);
      std::vector<int> labels = checked_labels(labels_in, embeddings.count());
      auto detections = parse_detections(detections_in, config.fps);
      out << format_rank(cross_camera_rank(embeddings, detections, labels, stride, max_queries, config.seed), csv);
    } else if (demo->parsed()) {
      ScenarioConfig config = g.config();
      TrainConfig train;
      train.kind = parse_distance_kind(kind_name);
      train.margin = config.margin;
      train.P = std::min(config.P, clusters.identity_count);
      train.K = config.K;
      train.seed = config.seed;
      train.threads = config.threads;
      clusters.seed = config.seed;
      ClusterData training = make_clusters(clusters, config.seed);
      ClusterSpec held_spec = clusters;
      held_spec.seed = config.seed + 1;
      held_spec.label_noise = 0.0;
      ClusterData held_out = make_clusters(held_spec, config.seed);
      auto rows = loss_demo(training, held_out, train, iterations,
                            {WeightScheme::uniform, WeightScheme::batch_hard, WeightScheme::adaptive});
      write_text(trace_out, format_loss_demo(rows));
      for (const auto& r : rows) {
        out << to_string(r.scheme) << "_rank1=";
        if (r.diverged) out << "diverged@" << r.diverged_at << '\n';
        else out << format_real(r.rank1) << '\n';
      }
    } else if (study->parsed()) {
      ScenarioConfig config = g.config();
      WorldSpec world = load_world(world_path, g);
      NoiseSpec noise = load_noise(noise_path);
      auto truth = generate_world(world);
      std::vector<EmbeddingSet> checkpoints;
      Observations first;
      for (std::size_t i = 0; i < sigmas.size(); ++i) {
        noise.sigma = sigmas[i];
        Observations obs = degrade(truth, world, noise, world.seed + 1);
        if (i == 0) first = obs;
        checkpoints.push_back(std::move(obs.embeddings));
      }
      StudyOptions options;
      options.seed = config.seed;
      auto rows = tracking_vs_rank_study(checkpoints, first.detections, first.labels, config, options);
      write_text(table_out, format_study(rows));
      out << format_study(rows);
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace mtmc
