#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "ppan/cli.hpp"
#include "test_support.hpp"

using namespace ppan;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return last;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

constexpr const char* kSmallTraining = R"(
[model]
hidden = 8

[training]
observation_mode = useful
epochs = 3
patience = 3
batch_size = 100
)";

std::string small_config(const std::string& data_lines) {
  return "[data]\n" + data_lines + "\nn = 900\nn_train = 600\nn_test = 300\n" + kSmallTraining;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"gen", "--dist", "gaussian"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, UnknownDistributionListsGenerators) {
  const auto dir = temp_dir("cli_unknown_dist");
  const CliResult r = run({"gen", "--dist", "cauchy", "--out", (dir / "a.csv").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  for (const auto& g : generator_names()) EXPECT_NE(r.err.find(g), std::string::npos) << r.err;
}

TEST(Cli, GenMixtureWritesAllRows) {
  const auto dir = temp_dir("cli_gen_mixture");
  const auto csv = dir / "m.csv";
  ASSERT_EQ(run({"gen", "--dist", "mixture3", "--seed", "1", "--out", csv.string()}).code, cli::kExitOk);
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, 4), "x,y\n");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12001);
  EXPECT_TRUE(fs::exists(csv.string() + ".provenance.json"));
  EXPECT_TRUE(fs::exists(csv.string() + ".manifest.jsonl"));
}

TEST(Cli, GenLaplaceRoundTripsThroughLoader) {
  const auto dir = temp_dir("cli_gen_laplace");
  const auto csv = dir / "l.csv";
  ASSERT_EQ(run({"gen", "--dist", "laplace", "--n", "500", "--seed", "4", "--out", csv.string()}).code, 0);
  const CsvLoad l = load_csv(csv.string(), {"x"}, {"y"});
  const Dataset d = gen_multivariate_laplace(500, cov2(1.2, 0.9, 1.2), 4);
  EXPECT_EQ(l.dataset.x, d.x);
  EXPECT_EQ(l.dataset.y, d.y);
}

TEST(Cli, BoundsMissingFileNamesPath) {
  const auto dir = temp_dir("cli_bounds_missing");
  const std::string missing = (dir / "nope.csv").string();
  const CliResult r = run({"bounds", "--data", missing, "--out", (dir / "b.csv").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST(Cli, BoundsGaussianMatchesClosedForm) {
  const auto dir = temp_dir("cli_bounds_gaussian");
  const auto csv = dir / "g.csv", out = dir / "b.csv";
  ASSERT_EQ(run({"gen", "--dist", "gaussian", "--rho", "0.85", "--seed", "2", "--out", csv.string()}).code, 0);
  const CliResult r = run({"bounds", "--data", csv.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(out);
  EXPECT_EQ(text.substr(0, text.find('\n')), "delta,lower_nats,upper_nats");
  const auto last = split(last_line(text));
  ASSERT_EQ(last.size(), 3u);
  EXPECT_EQ(std::stod(last[0]), 1.0);
  EXPECT_EQ(std::stod(last[2]), 0.0);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = split(line);
    const double delta = std::stod(f[0]);
    const double closed = -0.5 * std::log(1 - 0.85 * 0.85 + 0.85 * 0.85 * delta);
    EXPECT_NEAR(std::stod(f[1]), closed, 0.05) << delta;
  }
  const std::string ingestion = slurp(out.string() + ".ingestion.txt");
  EXPECT_NE(ingestion.find("rows_read 12000"), std::string::npos);
  EXPECT_NE(ingestion.find("x_mean"), std::string::npos);
}

TEST(Cli, TrainWithoutDeltaNamesKey) {
  const auto dir = temp_dir("cli_train_nodelta");
  write_text(dir / "c.cfg", small_config("generator = gaussian"));
  const CliResult r = run({"train", "--config", (dir / "c.cfg").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("training.delta"), std::string::npos) << r.err;
}

TEST(Cli, BadConfigListsEveryKey) {
  const auto dir = temp_dir("cli_bad_config");
  write_text(dir / "c.cfg", "[data]\ngenerator = gaussian\nsize = 3\n[training]\nlamda = 1\nbatch = 2\n");
  const CliResult r = run({"train", "--config", (dir / "c.cfg").string(), "--delta", "0.5"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  for (const char* k : {"data.size", "training.lamda", "training.batch"}) EXPECT_NE(r.err.find(k), std::string::npos);
}

TEST(Cli, MissingConfigIsIoError) {
  EXPECT_EQ(run({"train", "--config", "/nonexistent/c.cfg", "--delta", "0.5"}).code, cli::kExitRuntime);
}

TEST(Cli, UnwritableOutputIsRuntimeError) {
  const auto dir = temp_dir("cli_unwritable");
  write_text(dir / "file", "x");
  const CliResult r = run({"gen", "--dist", "gaussian", "--n", "10", "--out", (dir / "file" / "a.csv").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);
}

TEST(Cli, BadDeltaOverrideIsUsageError) {
  const auto dir = temp_dir("cli_bad_delta");
  write_text(dir / "c.cfg", small_config("generator = gaussian"));
  EXPECT_EQ(run({"train", "--config", (dir / "c.cfg").string(), "--delta", "-1"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--config", (dir / "c.cfg").string(), "--delta", "0.5", "--mode", "partial"}).code,
            cli::kExitUsage);
}

TEST(Cli, ReplayGenAndBoundsByteIdentical) {
  const auto dir = temp_dir("cli_replay_gb");
  const auto csv = dir / "u.csv", bounds = dir / "b.csv";
  ASSERT_EQ(run({"gen", "--dist", "uniform", "--n", "2000", "--seed", "3", "--out", csv.string()}).code, 0);
  ASSERT_EQ(run({"replay", "--manifest", csv.string() + ".manifest.jsonl", "--out", (dir / "u2.csv").string()}).code, 0);
  EXPECT_EQ(slurp(csv), slurp(dir / "u2.csv"));

  ASSERT_EQ(run({"bounds", "--data", csv.string(), "--mode", "full", "--grid", "6", "--out", bounds.string()}).code, 0);
  ASSERT_EQ(run({"replay", "--manifest", bounds.string() + ".manifest.jsonl", "--out", (dir / "b2.csv").string()}).code,
            0);
  EXPECT_EQ(slurp(bounds), slurp(dir / "b2.csv"));
}

TEST(Cli, ReplayTrainSweepEvalByteIdentical) {
  const auto dir = temp_dir("cli_replay_tse");
  const auto csv = dir / "d.csv";
  ASSERT_EQ(run({"gen", "--dist", "gaussian", "--n", "900", "--out", csv.string()}).code, 0);
  write_text(dir / "c.cfg", small_config("csv = " + csv.string()));
  const std::string cfg = (dir / "c.cfg").string();

  const auto train = dir / "train";
  CliResult r = run({"train", "--config", cfg, "--delta", "0.5", "--seed", "5", "--out", train.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(train / "ingestion.txt"));
  ASSERT_EQ(run({"replay", "--manifest", (train / "manifest.jsonl").string(), "--out", (dir / "train2").string()}).code,
            0);
  EXPECT_EQ(slurp(train / "history.csv"), slurp(dir / "train2" / "history.csv"));
  EXPECT_EQ(slurp(train / "model.txt"), slurp(dir / "train2" / "model.txt"));

  const auto sweep = dir / "sweep";
  r = run({"sweep", "--config", cfg, "--deltas", "0.4,0.8", "--threads", "2", "--out", sweep.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run({"replay", "--manifest", (sweep / "manifest.jsonl").string(), "--out", (dir / "sweep2").string()}).code,
            0);
  EXPECT_EQ(slurp(sweep / "curve.csv"), slurp(dir / "sweep2" / "curve.csv"));
  EXPECT_EQ(slurp(sweep / "bounds.csv"), slurp(dir / "sweep2" / "bounds.csv"));
  const std::string curve = slurp(sweep / "curve.csv");
  EXPECT_EQ(curve.substr(0, curve.find('\n')), "delta,distortion,leakage_ksg,leakage_gaussian,lower_bound,upper_bound");

  const auto eval = dir / "eval";
  r = run({"eval", "--config", cfg, "--delta", "0.5", "--seed", "5", "--model", (train / "model.txt").string(), "--out",
           eval.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_EQ(run({"replay", "--manifest", (eval / "manifest.jsonl").string(), "--out", (dir / "eval2").string()}).code,
            0);
  EXPECT_EQ(slurp(eval / "point.csv"), slurp(dir / "eval2" / "point.csv"));
}

TEST(Cli, ReplayRejectsChangedInput) {
  const auto dir = temp_dir("cli_replay_changed");
  const auto csv = dir / "g.csv";
  ASSERT_EQ(run({"gen", "--dist", "gaussian", "--n", "300", "--out", csv.string()}).code, 0);
  ASSERT_EQ(run({"bounds", "--data", csv.string(), "--grid", "3", "--out", (dir / "b.csv").string()}).code, 0);
  write_text(csv, "x,y\n1,2\n3,5\n4,4\n");
  EXPECT_EQ(run({"replay", "--manifest", (dir / "b.csv").string() + ".manifest.jsonl", "--out",
                 (dir / "b2.csv").string()})
                .code,
            cli::kExitRuntime);
}

TEST(Cli, EvalRejectsMismatchedModel) {
  const auto dir = temp_dir("cli_eval_mismatch");
  write_text(dir / "c.cfg", small_config("generator = gaussian"));
  const std::string cfg = (dir / "c.cfg").string();
  ASSERT_EQ(run({"train", "--config", cfg, "--delta", "0.5", "--out", (dir / "t").string()}).code, 0);
  const CliResult r = run({"eval", "--config", cfg, "--delta", "0.5", "--mode", "full", "--model",
                     (dir / "t" / "model.txt").string(), "--out", (dir / "e").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = PPAN_CLI_PATH;
  const auto dir = temp_dir("cli_binary");
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >" + (dir / "log").string() + " 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("gen --dist gaussian --n 30 --out " + (dir / "a.csv").string()), 0);
  EXPECT_EQ(status("gen --dist nope --out " + (dir / "a.csv").string()), 2);
  EXPECT_EQ(status("bounds --data " + (dir / "missing.csv").string() + " --out " + (dir / "b.csv").string()), 1);
  EXPECT_EQ(status("sweep"), 2);
}
