// Command-line front end: synthetic data generation, training, evaluation,
// single-file scoring, and the optimizer/learning-rate sweep.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "milvad/milvad.hpp"

namespace fs = std::filesystem;

namespace {

milvad::OptimizerKind parse_optimizer(const std::string& s) {
  return s == "adam" ? milvad::OptimizerKind::Adam : milvad::OptimizerKind::Adagrad;
}

milvad::Stream parse_stream(const std::string& s) {
  if (s == "rgb") return milvad::Stream::Rgb;
  if (s == "flow") return milvad::Stream::Flow;
  return milvad::Stream::Fused;
}

std::uint64_t cell_seed(std::uint64_t base, std::size_t cell) {
  return base ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(cell + 1));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

// Flat `key = value` config file. Command-line flags win over config values,
// config values win over built-in defaults, and unrecognized keys are a hard
// error.
void apply_config(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in)
    milvad::raise(milvad::Errc::ConfigError, "cannot open config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#' || stripped.front() == ';')
      continue;
    const auto where = path + ":" + std::to_string(lineno);
    const auto eq = stripped.find('=');
    if (eq == std::string_view::npos)
      milvad::raise(milvad::Errc::ConfigError, where + ": expected key = value");
    const std::string key(trim(stripped.substr(0, eq)));
    std::string_view value = trim(stripped.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (key.empty())
      milvad::raise(milvad::Errc::ConfigError, where + ": empty key");
    if (key == "config")
      milvad::raise(milvad::Errc::ConfigError, where + ": config files cannot nest");
    auto* op = cmd->get_option_no_throw("--" + key);
    if (op == nullptr)
      milvad::raise(milvad::Errc::ConfigError, where + ": unknown key '" + key + "'");
    if (op->count() == 0) {
      op->add_result(std::string(value));
      op->run_callback();
    }
  }
}

void require_key(bool present, const char* flag) {
  if (!present)
    milvad::raise(milvad::Errc::ConfigError, std::string("missing required ") + flag);
}

struct GenOpts {
  milvad::SynthSpec spec;
  std::string out_dir;
  std::string config;
};

struct TrainOpts {
  milvad::TrainConfig cfg;
  std::string optimizer_name = "adagrad";
  std::string stream_name = "fused";
  std::string manifest;
  std::string data_dir;
  std::string out_dir = ".";
  std::string resume;
  std::string config;
};

struct EvalOpts {
  std::string manifest;
  std::string data_dir;
  std::string checkpoint;
  std::string out_dir = ".";
  std::string stream_name = "fused";
  std::size_t segments = 32;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 32;
  std::uint64_t seed = 0;
  std::string config;
};

struct ScoreOpts {
  std::string features;
  std::string checkpoint;
  std::size_t segments = 32;
  std::size_t hidden1 = 512;
  std::size_t hidden2 = 32;
  std::string config;
};

struct SweepOpts {
  TrainOpts train;
  std::string test_manifest;
};

void add_train_flags(CLI::App* cmd, TrainOpts& o) {
  cmd->add_option("--config", o.config, "Read options from a flat key=value file");
  cmd->add_option("--manifest", o.manifest, "Training manifest CSV");
  cmd->add_option("--data-dir", o.data_dir,
                  "Feature file directory (default: manifest directory)");
  cmd->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--segments", o.cfg.n_segments, "Segments per bag")
      ->capture_default_str();
  cmd->add_option("--batch-pairs", o.cfg.batch_pairs, "Abnormal/normal pairs per batch")
      ->capture_default_str();
  cmd->add_option("--optimizer", o.optimizer_name, "Optimizer")
      ->check(CLI::IsMember({"adagrad", "adam"}))
      ->capture_default_str();
  cmd->add_option("--lr", o.cfg.optimizer.learning_rate, "Learning rate")
      ->capture_default_str();
  cmd->add_option("--lambda1", o.cfg.objective.lambda1, "Sparsity weight")
      ->capture_default_str();
  cmd->add_option("--lambda2", o.cfg.objective.lambda2, "Smoothness weight")
      ->capture_default_str();
  cmd->add_option("--margin", o.cfg.objective.margin, "Ranking margin")
      ->capture_default_str();
  cmd->add_option("--dropout", o.cfg.dropout_rate, "Dropout rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", o.cfg.weight_decay, "L2 weight decay")
      ->capture_default_str();
  cmd->add_option("--iterations", o.cfg.iterations, "Training iterations")
      ->capture_default_str();
  cmd->add_option("--stream", o.stream_name, "Feature stream")
      ->check(CLI::IsMember({"rgb", "flow", "fused"}))
      ->capture_default_str();
  cmd->add_option("--seed", o.cfg.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--hidden1", o.cfg.hidden1, "First hidden layer width")
      ->capture_default_str();
  cmd->add_option("--hidden2", o.cfg.hidden2, "Second hidden layer width")
      ->capture_default_str();
  cmd->add_option("--checkpoint-every", o.cfg.checkpoint_every,
                  "Also write the checkpoint every N iterations (0: final only)")
      ->capture_default_str();
}

std::vector<milvad::Bag> load_bags(const std::string& manifest_path,
                                   const std::string& data_dir, milvad::Split split,
                                   milvad::Stream stream, std::size_t segments) {
  const auto manifest = milvad::load_manifest(manifest_path, split);
  const fs::path base =
      data_dir.empty() ? fs::path(manifest_path).parent_path() : fs::path(data_dir);
  return milvad::build_bags(manifest, base, stream, segments);
}

int run_gen(const GenOpts& o) {
  require_key(!o.out_dir.empty(), "--out");
  require_key(o.spec.dim > 0, "--dim");
  const auto r = milvad::generate(o.spec, o.out_dir);
  std::printf("train_manifest=%s\n", r.train_manifest.string().c_str());
  std::printf("test_manifest=%s\n", r.test_manifest.string().c_str());
  return 0;
}

int run_train(TrainOpts& o) {
  require_key(!o.manifest.empty(), "--manifest");
  o.cfg.optimizer.kind = parse_optimizer(o.optimizer_name);
  o.cfg.stream_mode = parse_stream(o.stream_name);
  const auto bags =
      load_bags(o.manifest, o.data_dir, milvad::Split::Train, o.cfg.stream_mode,
                o.cfg.n_segments);
  if (bags.empty()) milvad::raise(milvad::Errc::EmptyBatch, "training manifest is empty");

  fs::create_directories(o.out_dir);
  const fs::path ckpt_path = fs::path(o.out_dir) / "model.vmc";
  const fs::path loss_path = fs::path(o.out_dir) / "loss.csv";
  const fs::path state_path = fs::path(o.out_dir) / "state.vts";

  milvad::TrainState st =
      o.resume.empty()
          ? milvad::make_train_state(bags.front().segments.cols(), o.cfg)
          : milvad::load_train_state(o.resume);
  const std::size_t steps =
      o.cfg.iterations > st.iteration
          ? static_cast<std::size_t>(o.cfg.iterations - st.iteration)
          : 0;

  milvad::TrainLog log;
  const milvad::CheckpointSink sink = [&](const milvad::ScoringNetwork& net,
                                          std::uint64_t) {
    milvad::save_checkpoint(net, ckpt_path);
  };
  milvad::train_steps(st, bags, o.cfg, steps, log, sink);

  milvad::save_checkpoint(st.net, ckpt_path);
  milvad::save_train_state(st, state_path);
  milvad::write_loss_csv(loss_path, log);
  std::printf("checkpoint=%s\n", ckpt_path.string().c_str());
  std::printf("state=%s\n", state_path.string().c_str());
  std::printf("loss_csv=%s\n", loss_path.string().c_str());
  return 0;
}

int run_eval(const EvalOpts& o) {
  require_key(!o.manifest.empty(), "--manifest");
  require_key(!o.checkpoint.empty(), "--checkpoint");
  const auto net = milvad::load_checkpoint(o.checkpoint, o.hidden1, o.hidden2);
  const auto bags = load_bags(o.manifest, o.data_dir, milvad::Split::Test,
                              parse_stream(o.stream_name), o.segments);
  const auto result = milvad::evaluate(net, bags);
  fs::create_directories(o.out_dir);
  milvad::write_roc_csv(fs::path(o.out_dir) / "roc.csv", result.roc);
  milvad::write_frame_scores_csv(fs::path(o.out_dir) / "frames.csv", result.videos);
  std::printf("auc=%.6f\n", result.roc.auc);
  return 0;
}

int run_score(const ScoreOpts& o) {
  require_key(!o.features.empty(), "--features");
  require_key(!o.checkpoint.empty(), "--checkpoint");
  const auto net = milvad::load_checkpoint(o.checkpoint, o.hidden1, o.hidden2);
  const auto tensor = milvad::read_feature_file(o.features);
  const auto segments = milvad::segmentize(tensor, o.segments);
  const auto scores = milvad::score_bag(net, segments);
  for (double s : scores) std::printf("%.6f\n", s);
  std::printf("max=%.6f\n", milvad::bag_max(scores).first);
  return 0;
}

int run_sweep(SweepOpts& o) {
  require_key(!o.train.manifest.empty(), "--manifest");
  require_key(!o.test_manifest.empty(), "--test-manifest");
  o.train.cfg.stream_mode = parse_stream(o.train.stream_name);
  const auto train_bags =
      load_bags(o.train.manifest, o.train.data_dir, milvad::Split::Train,
                o.train.cfg.stream_mode, o.train.cfg.n_segments);
  const auto test_bags =
      load_bags(o.test_manifest, o.train.data_dir.empty()
                                     ? fs::path(o.test_manifest).parent_path().string()
                                     : o.train.data_dir,
                milvad::Split::Test, o.train.cfg.stream_mode, o.train.cfg.n_segments);

  struct Row {
    milvad::OptimizerKind kind;
    double lr;
    double auc;
    double final_loss;
  };
  std::vector<Row> rows;
  const auto grid = milvad::sweep_grid();
  for (std::size_t cell = 0; cell < grid.size(); ++cell) {
    milvad::TrainConfig cfg = o.train.cfg;
    cfg.optimizer.kind = grid[cell].first;
    cfg.optimizer.learning_rate = grid[cell].second;
    cfg.seed = cell_seed(o.train.cfg.seed, cell);
    auto result = milvad::train(train_bags, cfg);
    const double final_loss = result.log.records.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : result.log.records.back().total;
    const auto eval_result = milvad::evaluate(result.net, test_bags);
    rows.push_back({grid[cell].first, grid[cell].second, eval_result.roc.auc, final_loss});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.auc > b.auc; });

  fs::create_directories(o.train.out_dir);
  const fs::path csv_path = fs::path(o.train.out_dir) / "sweep.csv";
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) milvad::raise(milvad::Errc::IoFailure, "cannot open " + csv_path.string());
  out << "optimizer,lr,auc,final_loss\n";
  for (const auto& r : rows)
    out << milvad::to_string(r.kind) << ',' << milvad::detail::format_double(r.lr)
        << ',' << milvad::detail::format_double(r.auc) << ','
        << milvad::detail::format_double(r.final_loss) << '\n';
  if (!out.flush())
    milvad::raise(milvad::Errc::IoFailure, "write failed: " + csv_path.string());
  std::printf("sweep_csv=%s\n", csv_path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised video anomaly scoring"};
  app.require_subcommand(1);

  GenOpts gen;
  auto* cmd_gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  cmd_gen->add_option("--config", gen.config, "Read options from a flat key=value file");
  cmd_gen->add_option("--out", gen.out_dir, "Output directory (required)");
  cmd_gen->add_option("--dim", gen.spec.dim, "Per-stream feature width (required)");
  cmd_gen->add_option("--normal", gen.spec.num_normal, "Normal training videos")
      ->capture_default_str();
  cmd_gen->add_option("--abnormal", gen.spec.num_abnormal, "Abnormal training videos")
      ->capture_default_str();
  cmd_gen->add_option("--test-normal", gen.spec.num_normal_test, "Normal test videos")
      ->capture_default_str();
  cmd_gen
      ->add_option("--test-abnormal", gen.spec.num_abnormal_test, "Abnormal test videos")
      ->capture_default_str();
  cmd_gen->add_option("--clips-min", gen.spec.clips_min, "Minimum clips per video")
      ->capture_default_str();
  cmd_gen->add_option("--clips-max", gen.spec.clips_max, "Maximum clips per video")
      ->capture_default_str();
  cmd_gen
      ->add_option("--separability", gen.spec.separability,
                   "Norm of the anomalous mean shift")
      ->capture_default_str();
  cmd_gen
      ->add_option("--anomaly-fraction", gen.spec.anomaly_fraction,
                   "Fraction of clips anomalous in abnormal videos")
      ->capture_default_str();
  cmd_gen->add_option("--sigma", gen.spec.noise_sigma, "Noise standard deviation")
      ->capture_default_str();
  cmd_gen->add_option("--seed", gen.spec.seed, "RNG seed")->capture_default_str();

  TrainOpts train;
  auto* cmd_train = app.add_subcommand("train", "Train the scoring network");
  add_train_flags(cmd_train, train);
  cmd_train->add_option("--resume", train.resume,
                        "Continue from a saved train state (model, optimizer and RNG "
                        "state; optimizer and seed flags are ignored)");

  EvalOpts eval;
  auto* cmd_eval = app.add_subcommand("eval", "Frame-level ROC/AUC on a test manifest");
  cmd_eval->add_option("--config", eval.config, "Read options from a flat key=value file");
  cmd_eval->add_option("--manifest", eval.manifest, "Test manifest CSV (required)");
  cmd_eval->add_option("--data-dir", eval.data_dir,
                       "Feature file directory (default: manifest directory)");
  cmd_eval->add_option("--checkpoint", eval.checkpoint, "Model checkpoint (required)");
  cmd_eval->add_option("--out", eval.out_dir, "Output directory")->capture_default_str();
  cmd_eval->add_option("--segments", eval.segments, "Segments per bag")
      ->capture_default_str();
  cmd_eval->add_option("--stream", eval.stream_name, "Feature stream")
      ->check(CLI::IsMember({"rgb", "flow", "fused"}))
      ->capture_default_str();
  cmd_eval->add_option("--hidden1", eval.hidden1, "First hidden layer width")
      ->capture_default_str();
  cmd_eval->add_option("--hidden2", eval.hidden2, "Second hidden layer width")
      ->capture_default_str();
  cmd_eval->add_option("--seed", eval.seed, "RNG seed (evaluation is deterministic)")
      ->capture_default_str();

  ScoreOpts score;
  auto* cmd_score = app.add_subcommand("score", "Score one feature file");
  cmd_score->add_option("--config", score.config,
                        "Read options from a flat key=value file");
  cmd_score->add_option("--features", score.features, "Feature file (required)");
  cmd_score->add_option("--checkpoint", score.checkpoint, "Model checkpoint (required)");
  cmd_score->add_option("--segments", score.segments, "Segments per bag")
      ->capture_default_str();
  cmd_score->add_option("--hidden1", score.hidden1, "First hidden layer width")
      ->capture_default_str();
  cmd_score->add_option("--hidden2", score.hidden2, "Second hidden layer width")
      ->capture_default_str();

  SweepOpts sweep;
  auto* cmd_sweep =
      app.add_subcommand("sweep", "Train and evaluate the optimizer/learning-rate grid");
  add_train_flags(cmd_sweep, sweep.train);
  cmd_sweep->add_option("--test-manifest", sweep.test_manifest,
                        "Test manifest CSV (required)");
  cmd_sweep->get_option("--optimizer")->description("Ignored; the sweep covers the grid");
  cmd_sweep->get_option("--lr")->description("Ignored; the sweep covers the grid");

  try {
    app.parse(argc, argv);
    if (cmd_gen->parsed()) {
      if (!gen.config.empty()) apply_config(cmd_gen, gen.config);
      return run_gen(gen);
    }
    if (cmd_train->parsed()) {
      if (!train.config.empty()) apply_config(cmd_train, train.config);
      return run_train(train);
    }
    if (cmd_eval->parsed()) {
      if (!eval.config.empty()) apply_config(cmd_eval, eval.config);
      return run_eval(eval);
    }
    if (cmd_score->parsed()) {
      if (!score.config.empty()) apply_config(cmd_score, score.config);
      return run_score(score);
    }
    if (cmd_sweep->parsed()) {
      if (!sweep.train.config.empty()) apply_config(cmd_sweep, sweep.train.config);
      return run_sweep(sweep);
    }
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const milvad::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == milvad::Errc::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
