#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "dendron/data_io.hpp"
#include "dendron/resources.hpp"

using namespace dendron;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream is(text);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) n += line.rfind(prefix, 0) == 0 ? 1 : 0;
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    unsetenv("DENDRON_SEED");
    dir_ = fs::temp_directory_path() /
           ("dendron_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void synth_four_class() {
    ASSERT_EQ(run({"synth", "--preset", "four-class", "--out-dir", path("fc"), "--seconds", "12",
                   "--test-seconds", "6"})
                  .code,
              0);
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, MissingSchemaIsAUsageError) {
  const auto r = run({"train", "--data", "x.csv", "--out", "m.bin"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("schema"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagAndSubcommandAreRejected) {
  EXPECT_EQ(run({"resources", "--model", "m", "--bogus"}).code, cli::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(run({}).code, cli::kUsage);
}

TEST_F(CliTest, UnknownConfigKeyIsRejected) {
  synth_four_class();
  write("bad.cfg", "epochs=1\nmomentum=0.9\n");
  const auto r = run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                      "--config", path("bad.cfg"), "--out", path("m.bin")});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("momentum"), std::string::npos);
}

TEST_F(CliTest, RunConfigRoundTrip) {
  std::istringstream in(
      "# comment\nepochs=7\nlearning_rate=0.05\nseed=3\nalpha_mode=teacher_forced\nshuffle=false\n"
      "fe_blocks=3:4:2\nhead_hidden=8,4\noverlap=0.25\nlabel_rule=strict_uniform\n");
  const auto cfg = cli::parse_run_config(in);
  EXPECT_EQ(cfg.epochs, 7u);
  EXPECT_EQ(cfg.alpha_mode, AlphaMode::TeacherForced);
  EXPECT_FALSE(cfg.shuffle);
  EXPECT_EQ(cfg.fe_blocks, (std::vector<ConvBlockSpec>{{3, 4, 2}}));
  EXPECT_EQ(cfg.head_hidden, (std::vector<std::size_t>{8, 4}));
  std::ostringstream out;
  cli::write_run_config(cfg, out);
  std::istringstream again(out.str());
  const auto back = cli::parse_run_config(again);
  EXPECT_EQ(back.epochs, cfg.epochs);
  EXPECT_EQ(back.learning_rate, cfg.learning_rate);
  EXPECT_EQ(back.fe_blocks, cfg.fe_blocks);
  EXPECT_EQ(back.windowing.label_rule, LabelRule::StrictUniform);
}

TEST_F(CliTest, ZeroEpochsWritesTheInitialization) {
  synth_four_class();
  write("zero.cfg", "epochs=0\nseed=4\nfe_blocks=5:4:2\n");
  const auto r = run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                      "--config", path("zero.cfg"), "--out", path("m.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto expected = ModelBundle::initialize({6, 52, {{5, 4, 2}}}, {}, four_class_hierarchy(), 4);
  EXPECT_EQ(slurp(path("m.bin")), save_model(expected));
  EXPECT_NE(r.out.find("# resolved config"), std::string::npos);
  EXPECT_NE(r.out.find("seed=4"), std::string::npos);
}

TEST_F(CliTest, TrainingTwiceGivesIdenticalModels) {
  synth_four_class();
  write("run.cfg", "epochs=2\nfe_blocks=5:4:2\n");
  for (const char* out : {"a.bin", "b.bin"}) {
    const auto r = run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                        "--test-data", path("fc/test.csv"), "--config", path("run.cfg"), "--out",
                        path(out)});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_lines_starting(r.out, "epoch,"), 2u);
  }
  EXPECT_EQ(slurp(path("a.bin")), slurp(path("b.bin")));
}

TEST_F(CliTest, SeedFromEnvironmentIsReported) {
  synth_four_class();
  write("run.cfg", "epochs=0\nseed=1\n");
  setenv("DENDRON_SEED", "77", 1);
  const auto r = run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                      "--config", path("run.cfg"), "--out", path("m.bin")});
  unsetenv("DENDRON_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("DENDRON_SEED=77"), std::string::npos);
  EXPECT_NE(r.out.find("seed=77"), std::string::npos);
}

TEST_F(CliTest, InferPrintsOneTracePerWindow) {
  synth_four_class();
  write("run.cfg", "epochs=1\nfe_blocks=5:4:2\n");
  ASSERT_EQ(run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                 "--config", path("run.cfg"), "--out", path("m.bin")})
                .code,
            0);
  const auto r = run({"infer", "--model", path("m.bin"), "--data", path("fc/test.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rec = read_csv_file(path("fc/test.csv"));
  const auto windows = segment_windows(rec, WindowingConfig{});
  EXPECT_EQ(count_lines_starting(r.out, "trace,"), windows.size());

  const auto graph = four_class_hierarchy();
  std::istringstream is(r.out);
  std::map<std::string, std::size_t> per_class;
  for (std::string line; std::getline(is, line);) {
    if (line.rfind("trace,", 0) == 0) {
      std::vector<std::string> f;
      std::istringstream ls(line);
      for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
      EXPECT_TRUE(graph.is_terminal(f[4])) << line;
    } else if (line.rfind("class,", 0) == 0) {
      std::vector<std::string> f;
      std::istringstream ls(line);
      for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
      per_class[f[1]] = std::stoul(f[3]);
    }
  }
  std::map<std::string, std::size_t> want;
  for (const auto& w : windows) ++want[w.label];
  EXPECT_EQ(per_class, want);
}

TEST_F(CliTest, AddTaskPlacementFromCounts) {
  const auto bundle = ModelBundle::initialize({6, 52, {{5, 4, 2}}}, {}, activity_hierarchy(), 1);
  save_model_file(bundle, path("act.bin"));
  const std::string counts = "walking=959,running=247,standing=3";
  const auto half = run({"add-task", "--model", path("act.bin"), "--counts", counts, "--delta", "0.5"});
  ASSERT_EQ(half.code, 0) << half.err;
  EXPECT_NE(half.out.find("attach: walking\n"), std::string::npos);
  const auto more = run({"add-task", "--model", path("act.bin"), "--counts", counts, "--delta", "0.6"});
  EXPECT_NE(more.out.find("attach: walking, running\n"), std::string::npos);
  EXPECT_EQ(run({"add-task", "--model", path("act.bin"), "--counts", counts, "--delta", "2"}).code,
            cli::kUsage);
}

TEST_F(CliTest, AddTaskTrainsAHeadAndKeepsTheExtractor) {
  synth_four_class();
  ASSERT_EQ(run({"synth", "--preset", "fine-split", "--out-dir", path("fs"), "--seconds", "8",
                 "--test-seconds", "4"})
                .code,
            0);
  write("run.cfg", "epochs=1\nfe_blocks=5:4:2\n");
  ASSERT_EQ(run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                 "--config", path("run.cfg"), "--out", path("m.bin")})
                .code,
            0);
  const auto r = run({"add-task", "--model", path("m.bin"), "--data", path("fs/train.csv"),
                      "--classes", "walk_up,walk_down", "--epochs", "2", "--out", path("m2.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto before = load_model_file(path("m.bin"));
  const auto after = load_model_file(path("m2.bin"));
  EXPECT_EQ(feature_extractor_digest(before), feature_extractor_digest(after));
  EXPECT_EQ(after.graph().size(), before.graph().size() + 1);
  EXPECT_TRUE(after.graph().is_terminal("walk_up"));
  EXPECT_NE(r.out.find("attach: "), std::string::npos);

  const auto mismatch = run({"add-task", "--model", path("m.bin"), "--data", path("fs/train.csv"),
                             "--classes", "x,y", "--out", path("m3.bin")});
  EXPECT_EQ(mismatch.code, cli::kDataError);
}

TEST_F(CliTest, ResourcesRowsMatchTheLibrary) {
  const auto bundle = ModelBundle::initialize({6, 52, {{5, 8, 2}, {3, 16, 2}}}, {}, activity_hierarchy(), 1);
  save_model_file(bundle, path("act.bin"));
  const auto r = run({"resources", "--model", path("act.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_resource_rows(r.out);
  const auto report = compare_deployments(bundle);
  std::map<std::string, ResourceRow> by_name;
  for (const auto& row : rows) by_name[row.name] = row;
  EXPECT_EQ(by_name.at("deploy.dendron").params, report.dendron.params());
  EXPECT_EQ(by_name.at("deploy.hierarchical").bytes, report.hierarchical.bytes());
  EXPECT_EQ(by_name.at("feature_extractor").macc, report.feature_extractor.macc);
}

TEST_F(CliTest, ExitCodesForDataAndNumericFailures) {
  EXPECT_EQ(run({"resources", "--model", path("missing.bin")}).code, cli::kDataError);
  write("garbage.bin", "not a model");
  EXPECT_EQ(run({"eval", "--model", path("garbage.bin"), "--data", path("x.csv")}).code,
            cli::kDataError);

  synth_four_class();
  write("hot.cfg", "epochs=3\nlearning_rate=1e38\nfe_blocks=5:4:2\n");
  const auto r = run({"train", "--schema", path("fc/schema.txt"), "--data", path("fc/train.csv"),
                      "--config", path("hot.cfg"), "--out", path("m.bin")});
  EXPECT_EQ(r.code, cli::kNumericError) << r.err;
  EXPECT_FALSE(fs::exists(path("m.bin")));
}

TEST_F(CliTest, TrainRejectsLabelsOutsideTheSchema) {
  ASSERT_EQ(run({"synth", "--preset", "fine-split", "--out-dir", path("fs"), "--seconds", "4"}).code, 0);
  synth_four_class();
  write("run.cfg", "epochs=1\n");
  const auto r = run({"train", "--schema", path("fc/schema.txt"), "--data", path("fs/train.csv"),
                      "--config", path("run.cfg"), "--out", path("m.bin")});
  EXPECT_EQ(r.code, cli::kDataError);
}
