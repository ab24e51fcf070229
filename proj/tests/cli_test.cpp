#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>

#include "milvad/milvad.hpp"
#include "test_util.hpp"

namespace {

const std::string kCli = MILVAD_CLI_PATH;

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

testutil::CommandResult run_cli(const std::string& args) {
  return testutil::run_command(kCli + " " + args);
}

// generates a small dataset once per fixture user
struct Dataset {
  testutil::TempDir dir{"cli_data"};
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;

  Dataset() {
    auto r = run_cli("gen --out " + q(dir.path) +
                     " --dim 6 --normal 4 --abnormal 4 --test-normal 3"
                     " --test-abnormal 3 --clips-min 6 --clips-max 12 --seed 5");
    if (r.exit_code != 0) throw std::runtime_error("gen failed: " + r.output);
    train_manifest = dir.path / "train.csv";
    test_manifest = dir.path / "test.csv";
  }

  std::string train_args(const std::filesystem::path& out, int seed = 3) const {
    return "train --manifest " + q(train_manifest) + " --out " + q(out) +
           " --iterations 8 --batch-pairs 2 --hidden1 16 --hidden2 8 --seed " +
           std::to_string(seed);
  }
};

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// loss records end with a wall-clock column; drop it before comparing runs
std::string strip_last_column(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    auto comma = line.rfind(',');
    out += line.substr(0, comma);
    out += '\n';
  }
  return out;
}

}  // namespace

TEST(Cli, NoSubcommandIsConfigError) {
  EXPECT_EQ(run_cli("").exit_code, 2);
}

TEST(Cli, HelpExitsCleanly) {
  auto r = run_cli("--help");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("gen"), std::string::npos);
  EXPECT_NE(r.output.find("train"), std::string::npos);
  EXPECT_NE(r.output.find("sweep"), std::string::npos);
}

TEST(Cli, UnknownFlagIsConfigError) {
  EXPECT_EQ(run_cli("train --bogus 1").exit_code, 2);
}

TEST(Cli, BadEnumValueIsConfigError) {
  EXPECT_EQ(run_cli("train --manifest x.csv --optimizer sgd").exit_code, 2);
  EXPECT_EQ(run_cli("eval --manifest x.csv --checkpoint m.vmc --stream infrared")
                .exit_code,
            2);
}

TEST(Cli, MissingRequiredValueIsConfigError) {
  auto r = run_cli("train --iterations 1");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("--manifest"), std::string::npos);
}

TEST(Cli, GenWritesManifestsAndFeatures) {
  Dataset data;
  EXPECT_TRUE(std::filesystem::exists(data.train_manifest));
  EXPECT_TRUE(std::filesystem::exists(data.test_manifest));
  EXPECT_TRUE(std::filesystem::exists(data.dir.path / "train_normal_0000.rgb.vfe"));
  EXPECT_TRUE(std::filesystem::exists(data.dir.path / "test_abnormal_0002.flow.vfe"));
}

TEST(Cli, TrainEvalPipeline) {
  Dataset data;
  testutil::TempDir out("cli_run");
  auto train = run_cli(data.train_args(out.path / "run"));
  ASSERT_EQ(train.exit_code, 0) << train.output;
  EXPECT_NE(train.output.find("checkpoint="), std::string::npos);
  ASSERT_TRUE(std::filesystem::exists(out.path / "run" / "model.vmc"));
  ASSERT_TRUE(std::filesystem::exists(out.path / "run" / "state.vts"));
  auto loss = testutil::read_text(out.path / "run" / "loss.csv");
  EXPECT_EQ(count_lines(loss), 9u);  // header + 8 iterations
  EXPECT_TRUE(loss.rfind("iteration,total,hinge,sparsity,smoothness,ms\n", 0) == 0);

  auto eval = run_cli("eval --manifest " + q(data.test_manifest) + " --checkpoint " +
                      q(out.path / "run" / "model.vmc") + " --out " +
                      q(out.path / "eval") + " --hidden1 16 --hidden2 8");
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  EXPECT_TRUE(eval.output.rfind("auc=0.", 0) == 0 || eval.output.rfind("auc=1.", 0) == 0)
      << eval.output;
  auto roc = testutil::read_text(out.path / "eval" / "roc.csv");
  EXPECT_TRUE(roc.rfind("threshold,fpr,tpr\n", 0) == 0);
  auto frames = testutil::read_text(out.path / "eval" / "frames.csv");
  EXPECT_TRUE(frames.rfind("video_id,frame,score,truth\n", 0) == 0);
  EXPECT_GT(count_lines(frames), 1u);
}

TEST(Cli, ZeroIterationsWritesHeaderOnlyLog) {
  Dataset data;
  testutil::TempDir out("cli_zero");
  auto r = run_cli("train --manifest " + q(data.train_manifest) + " --out " +
                   q(out.path) + " --iterations 0 --hidden1 16 --hidden2 8");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(testutil::read_text(out.path / "loss.csv"),
            "iteration,total,hinge,sparsity,smoothness,ms\n");
  EXPECT_TRUE(std::filesystem::exists(out.path / "model.vmc"));
}

TEST(Cli, SameSeedRunsAreByteIdentical) {
  Dataset data;
  testutil::TempDir out("cli_det");
  auto a = run_cli(data.train_args(out.path / "a"));
  auto b = run_cli(data.train_args(out.path / "b"));
  ASSERT_EQ(a.exit_code, 0) << a.output;
  ASSERT_EQ(b.exit_code, 0) << b.output;
  EXPECT_EQ(testutil::read_bytes(out.path / "a" / "model.vmc"),
            testutil::read_bytes(out.path / "b" / "model.vmc"));
  EXPECT_EQ(testutil::read_bytes(out.path / "a" / "state.vts"),
            testutil::read_bytes(out.path / "b" / "state.vts"));
  EXPECT_EQ(strip_last_column(testutil::read_text(out.path / "a" / "loss.csv")),
            strip_last_column(testutil::read_text(out.path / "b" / "loss.csv")));

  auto c = run_cli(data.train_args(out.path / "c", 4));
  ASSERT_EQ(c.exit_code, 0);
  EXPECT_NE(testutil::read_bytes(out.path / "a" / "model.vmc"),
            testutil::read_bytes(out.path / "c" / "model.vmc"));
}

TEST(Cli, ResumeReachesSameBytesAsStraightRun) {
  Dataset data;
  testutil::TempDir out("cli_resume");
  auto first = run_cli("train --manifest " + q(data.train_manifest) + " --out " +
                       q(out.path / "half") +
                       " --iterations 4 --batch-pairs 2 --hidden1 16 --hidden2 8");
  ASSERT_EQ(first.exit_code, 0) << first.output;
  auto resumed = run_cli("train --manifest " + q(data.train_manifest) + " --out " +
                         q(out.path / "resumed") + " --resume " +
                         q(out.path / "half" / "state.vts") +
                         " --iterations 8 --batch-pairs 2 --hidden1 16 --hidden2 8");
  ASSERT_EQ(resumed.exit_code, 0) << resumed.output;
  auto straight = run_cli("train --manifest " + q(data.train_manifest) + " --out " +
                          q(out.path / "straight") +
                          " --iterations 8 --batch-pairs 2 --hidden1 16 --hidden2 8");
  ASSERT_EQ(straight.exit_code, 0) << straight.output;
  EXPECT_EQ(testutil::read_bytes(out.path / "resumed" / "model.vmc"),
            testutil::read_bytes(out.path / "straight" / "model.vmc"));
  EXPECT_EQ(testutil::read_bytes(out.path / "resumed" / "state.vts"),
            testutil::read_bytes(out.path / "straight" / "state.vts"));
}

TEST(Cli, ConfigFileFillsGapsButFlagsWin) {
  Dataset data;
  testutil::TempDir out("cli_cfg");
  auto cfg_path = out.path / "run.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "# comment line\n"
        << "iterations = 3\n"
        << "batch-pairs = 2\n"
        << "hidden1 = 16\n"
        << "hidden2 = 8\n"
        << "manifest = \"" << data.train_manifest.string() << "\"\n";
  }
  // config alone: 3 iterations
  auto from_cfg = run_cli("train --config " + q(cfg_path) + " --out " +
                          q(out.path / "from_cfg"));
  ASSERT_EQ(from_cfg.exit_code, 0) << from_cfg.output;
  EXPECT_EQ(count_lines(testutil::read_text(out.path / "from_cfg" / "loss.csv")), 4u);

  // explicit flag beats the config value
  auto flag_wins = run_cli("train --config " + q(cfg_path) + " --iterations 5 --out " +
                           q(out.path / "flag_wins"));
  ASSERT_EQ(flag_wins.exit_code, 0) << flag_wins.output;
  EXPECT_EQ(count_lines(testutil::read_text(out.path / "flag_wins" / "loss.csv")), 6u);
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
  Dataset data;
  testutil::TempDir out("cli_badcfg");
  auto cfg_path = out.path / "bad.cfg";
  {
    std::ofstream cfg(cfg_path);
    cfg << "iterationz = 5\n";
  }
  auto r = run_cli("train --manifest " + q(data.train_manifest) + " --config " +
                   q(cfg_path) + " --out " + q(out.path / "run"));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("iterationz"), std::string::npos);
}

TEST(Cli, ScoreZeroCheckpointPrintsHalfPerSegment) {
  Dataset data;
  testutil::TempDir out("cli_score");
  auto net = milvad::init_network(6, 0.6, 0, 16, 8);
  net.w1.fill(0.0);
  net.w2.fill(0.0);
  std::fill(net.w3.begin(), net.w3.end(), 0.0);
  auto ckpt = out.path / "zero.vmc";
  milvad::save_checkpoint(net, ckpt);

  auto r = run_cli("score --features " +
                   q(data.dir.path / "test_abnormal_0000.rgb.vfe") + " --checkpoint " +
                   q(ckpt) + " --segments 4 --hidden1 16 --hidden2 8");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(r.output,
            "0.500000\n0.500000\n0.500000\n0.500000\nmax=0.500000\n");
}

TEST(Cli, ScoreDimensionMismatchIsRuntimeError) {
  Dataset data;
  testutil::TempDir out("cli_scoremm");
  auto net = milvad::init_network(12, 0.6, 0, 16, 8);  // fused width
  auto ckpt = out.path / "fused.vmc";
  milvad::save_checkpoint(net, ckpt);
  auto r = run_cli("score --features " +
                   q(data.dir.path / "test_normal_0000.rgb.vfe") + " --checkpoint " +
                   q(ckpt) + " --hidden1 16 --hidden2 8");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, MissingInputFilesAreRuntimeErrors) {
  testutil::TempDir out("cli_missing");
  auto r = run_cli("eval --manifest /nonexistent/test.csv --checkpoint /nonexistent/m.vmc");
  EXPECT_EQ(r.exit_code, 1);
  auto r2 = run_cli("train --manifest /nonexistent/train.csv --out " + q(out.path));
  EXPECT_EQ(r2.exit_code, 1);
}

TEST(Cli, UnwritableOutputIsRuntimeError) {
  Dataset data;
  testutil::TempDir out("cli_unwritable");
  // a regular file where a directory component must go
  std::ofstream(out.path / "blocker") << "x";
  auto r = run_cli("train --manifest " + q(data.train_manifest) + " --out " +
                   q(out.path / "blocker" / "run") + " --iterations 1 --batch-pairs 2" +
                   " --hidden1 16 --hidden2 8");
  EXPECT_EQ(r.exit_code, 1);
}

TEST(Cli, SweepCoversGridAndSortsByAuc) {
  Dataset data;
  testutil::TempDir out("cli_sweep");
  auto r = run_cli("sweep --manifest " + q(data.train_manifest) + " --test-manifest " +
                   q(data.test_manifest) + " --out " + q(out.path) +
                   " --iterations 2 --batch-pairs 2 --hidden1 16 --hidden2 8");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  auto csv = testutil::read_text(out.path / "sweep.csv");
  ASSERT_TRUE(csv.rfind("optimizer,lr,auc,final_loss\n", 0) == 0) << csv;
  EXPECT_EQ(count_lines(csv), 7u);  // header + 6 grid cells
  for (const char* cell : {"adagrad,0.01,", "adagrad,0.001,", "adagrad,0.0001,",
                           "adam,0.01,", "adam,0.001,", "adam,0.0001,"})
    EXPECT_NE(csv.find(cell), std::string::npos) << cell;

  // rows are sorted by AUC, best first
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  double prev = 2.0;
  while (std::getline(in, line)) {
    auto first = line.find(',');
    auto second = line.find(',', first + 1);
    auto third = line.find(',', second + 1);
    const double auc = std::stod(line.substr(second + 1, third - second - 1));
    ASSERT_LE(auc, prev) << csv;
    prev = auc;
  }
}
