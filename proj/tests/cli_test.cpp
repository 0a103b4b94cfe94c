#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "dskg_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, const std::string& log = "cli.log") {
  const std::string cmd = std::string(DSKG_CLI_PATH) + " " + args + " > " +
                          (work_dir() / log).string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string data_args() {
  const auto d = work_dir() / "toy";
  return " --train " + (d / "train.txt").string() + " --valid " + (d / "valid.txt").string() +
         " --test " + (d / "test.txt").string();
}

const std::string kSmall =
    " --dim 8 --layers 1 --epochs 2 --batch 64 --neg-entities 16 --neg-relations 3 --lr 0.01";

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto toy = (work_dir() / "toy").string();
    ASSERT_EQ(run("gen-toy --out " + toy + " --toy-entities 60 --toy-facts 80"), 0);
    ASSERT_EQ(run("train" + data_args() + kSmall + " --out " + (work_dir() / "run1").string()),
              0);
  }
};

}  // namespace

TEST_F(Pipeline, GenToyWritesSplits) {
  for (const char* f : {"train.txt", "valid.txt", "test.txt"}) {
    EXPECT_GT(fs::file_size(work_dir() / "toy" / f), 0u) << f;
  }
}

TEST_F(Pipeline, PrepareWritesStatsAndCache) {
  const auto out = work_dir() / "prep";
  ASSERT_EQ(run("prepare" + data_args() + " --out " + out.string()), 0);
  const auto stats = slurp(out / "stats.txt");
  EXPECT_NE(stats.find("entities\t60\n"), std::string::npos) << stats;
  EXPECT_NE(stats.find("relations\t8\n"), std::string::npos) << stats;
  EXPECT_TRUE(fs::exists(out / "dataset.bin"));
  const auto ckpt = (work_dir() / "run1" / "model.ckpt").string();
  const auto cached = work_dir() / "prep_eval_cached";
  const auto raw = work_dir() / "prep_eval_raw";
  ASSERT_EQ(run("eval --dataset " + (out / "dataset.bin").string() + " --checkpoint " + ckpt +
                " --out " + cached.string()),
            0);
  ASSERT_EQ(run("eval" + data_args() + " --checkpoint " + ckpt + " --out " + raw.string()), 0);
  EXPECT_EQ(slurp(cached / "report.txt"), slurp(raw / "report.txt"));
}

TEST_F(Pipeline, TrainIsReproducible) {
  const auto run2 = work_dir() / "run2";
  ASSERT_EQ(run("train" + data_args() + kSmall + " --out " + run2.string()), 0);
  EXPECT_EQ(slurp(work_dir() / "run1" / "model.ckpt"), slurp(run2 / "model.ckpt"));
  const auto log = slurp(run2 / "train.log");
  EXPECT_EQ(log.rfind("epoch\tmean_loss\tval_MRR\tval_Hits@10\telapsed_seconds\n", 0), 0u);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
}

TEST_F(Pipeline, EvalWritesAllVariantsDeterministically) {
  const auto ckpt = (work_dir() / "run1" / "model.ckpt").string();
  const auto a = work_dir() / "eval_a";
  const auto b = work_dir() / "eval_b";
  ASSERT_EQ(run("eval" + data_args() + " --checkpoint " + ckpt + " --out " + a.string()), 0);
  ASSERT_EQ(run("eval" + data_args() + " --checkpoint " + ckpt + " --out " + b.string()), 0);
  for (const char* f : {"metrics_entity_nre.txt", "metrics_entity_enhanced.txt",
                        "metrics_cascade_nre.txt", "metrics_cascade_enhanced.txt", "report.txt",
                        "ranks_nre.tsv", "ranks_enhanced.tsv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_NE(slurp(a / "metrics_entity_nre.txt").find("queries\t"), std::string::npos);
}

TEST_F(Pipeline, PredictTriplesWritesCurve) {
  const auto out = work_dir() / "predict";
  ASSERT_EQ(run("predict-triples" + data_args() + " --checkpoint " +
                (work_dir() / "run1" / "model.ckpt").string() +
                " --beam-pairs 50 --beam-triples 400 --curve-points 10 --out " + out.string()),
            0);
  const auto triples = slurp(out / "triples.tsv");
  const auto curve = slurp(out / "curve.tsv");
  EXPECT_GT(std::count(triples.begin(), triples.end(), '\n'), 0);
  EXPECT_LE(std::count(triples.begin(), triples.end(), '\n'), 400);
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 10);
}

TEST_F(Pipeline, AuditInverse) {
  const auto out = work_dir() / "audit";
  ASSERT_EQ(run("audit-inverse" + data_args() + " --out " + out.string(), "audit.log"), 0);
  EXPECT_GT(fs::file_size(out / "audit.tsv"), 0u);
  EXPECT_NE(slurp(work_dir() / "audit.log").find("exposed_fraction\t1\n"), std::string::npos)
      << slurp(work_dir() / "audit.log");
}

TEST_F(Pipeline, ConfigPrecedenceAndEcho) {
  const auto cfg = work_dir() / "run.cfg";
  std::ofstream(cfg) << "dim=24\nbatch=32\nseed=3\n";
  const auto out = work_dir() / "echo";
  const auto cmd = "DSKG_BATCH=48 " + std::string(DSKG_CLI_PATH) + " gen-toy --config " +
                   cfg.string() + " --seed 4 --out " + out.string() + " > /dev/null";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto echo = work_dir() / "echo_train";
  std::string env_cmd = "DSKG_BATCH=48 " + std::string(DSKG_CLI_PATH) + " train --config " +
                        cfg.string() + " --seed 4 --epochs 0 --out " + echo.string() + data_args() +
                        " > /dev/null";
  ASSERT_EQ(std::system(env_cmd.c_str()), 0);
  const auto text = slurp(echo / "config.resolved.txt");
  EXPECT_NE(text.find("dim=24\n"), std::string::npos);
  EXPECT_NE(text.find("batch=48\n"), std::string::npos);
  EXPECT_NE(text.find("seed=4\n"), std::string::npos);
}

TEST_F(Pipeline, DefaultsEchoed) {
  const auto echo = work_dir() / "echo_default";
  ASSERT_EQ(run("train --epochs 0 --dim 512" + data_args() + " --out " + echo.string()), 0);
  const auto text = slurp(echo / "config.resolved.txt");
  for (const char* line : {"lr=0.001\n", "batch=2048\n", "dim=512\n", "layers=2\n", "keep=0.5\n"}) {
    EXPECT_NE(text.find(line), std::string::npos) << line;
  }
}

TEST(CliErrors, MissingFileGivesOneLineError) {
  EXPECT_EQ(run("prepare --train /nonexistent/train.txt --valid x --test y --out " +
                    (work_dir() / "bad").string(),
                "bad.log"),
            1);
  const auto log = slurp(work_dir() / "bad.log");
  EXPECT_EQ(log.rfind("error\tio\t", 0), 0u) << log;
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1);
}

TEST(CliErrors, BadSettingAndMalformedInput) {
  EXPECT_EQ(run("gen-toy --lr fast --out " + (work_dir() / "bad2").string(), "bad2.log"), 1);
  EXPECT_EQ(slurp(work_dir() / "bad2.log").rfind("error\tconfig\t", 0), 0u);
  const auto bad = work_dir() / "malformed.txt";
  std::ofstream(bad) << "a\tb\tc\nonly two\tfields\n";
  EXPECT_EQ(run("prepare --train " + bad.string() + " --valid " + bad.string() + " --test " +
                    bad.string() + " --out " + (work_dir() / "bad3").string(),
                "bad3.log"),
            1);
  const auto log = slurp(work_dir() / "bad3.log");
  EXPECT_EQ(log.rfind("error\tparse\t", 0), 0u) << log;
  EXPECT_NE(log.find(":2"), std::string::npos) << log;
}
