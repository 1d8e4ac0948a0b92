#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sfg");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = sfg::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sfg_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string at(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}).code, sfg::cli::kExitOk);
  EXPECT_EQ(run_cli({}).code, sfg::cli::kExitUsage);
  EXPECT_EQ(run_cli({"explode"}).code, sfg::cli::kExitUsage);
  EXPECT_EQ(run_cli({"sample", "--bogus", "1", "--out", at("x")}).code, sfg::cli::kExitUsage);
  EXPECT_EQ(run_cli({"sample", "--w", "-1", "--out", at("x")}).code, sfg::cli::kExitUsage);
  EXPECT_EQ(run_cli({"sample", "--ts", "21", "--out", at("x")}).code, sfg::cli::kExitUsage);
  const Outcome missing = run_cli({"sample", "--checkpoint", at("nope.sfge"), "--out", at("x")});
  EXPECT_EQ(missing.code, sfg::cli::kExitData);
  EXPECT_NE(missing.err.find("nope.sfge"), std::string::npos);
  EXPECT_EQ(run_cli({"frechet", at("a.csv"), at("b.csv"), "--out", at("x")}).code, sfg::cli::kExitData);
}

TEST_F(CliTest, BinaryReportsExitCodes) {
  const std::string bin = SFG_CLI_PATH;
  EXPECT_EQ(std::system((bin + " --help > /dev/null").c_str()), 0);
  const int rc = std::system((bin + " nonsense > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(rc));
  EXPECT_EQ(WEXITSTATUS(rc), sfg::cli::kExitUsage);
}

TEST_F(CliTest, TrainThenSampleFromCheckpoint) {
  const Outcome tr = run_cli({"train", "--train-steps", "4", "--scenes", "16", "--out", at("train")});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(dir_ / "train" / "model.sfge"));
  EXPECT_TRUE(fs::exists(dir_ / "train" / "scene_000.pgm"));
  EXPECT_EQ(slurp(dir_ / "train" / "loss.csv").rfind("step,loss\n1,", 0), 0u);

  const Outcome s = run_cli({"sample", "--checkpoint", at("train/model.sfge"), "--prompt", "a red square",
                             "--out", at("s")});
  ASSERT_EQ(s.code, 0) << s.err;
  for (const char* f : {"z0.pgm", "z0.sfge", "trace.txt", "semantic_l0.pgm", "semantic_l1.pgm", "run_config.ini"}) {
    EXPECT_TRUE(fs::exists(dir_ / "s" / f)) << f;
  }
  const std::string trace = slurp(dir_ / "s" / "trace.txt");
  EXPECT_NE(trace.find("\n20,cf,"), std::string::npos);
}

TEST_F(CliTest, CompareIsDeterministic) {
  const std::vector<std::string> args = {"compare", "--prompt", "a blue cross above a red circle", "--seed", "11"};
  auto with_out = [&](const std::string& d) {
    std::vector<std::string> a = args;
    a.insert(a.end(), {"--out", at(d)});
    return a;
  };
  ASSERT_EQ(run_cli(with_out("one")).code, 0);
  ASSERT_EQ(run_cli(with_out("two")).code, 0);
  for (const char* f : {"cf/z0.pgm", "sf/z0.pgm", "cf/trace.txt", "sf/trace.txt", "sf/z0.sfge"}) {
    EXPECT_EQ(slurp(dir_ / "one" / f), slurp(dir_ / "two" / f)) << f;
  }
  EXPECT_NE(slurp(dir_ / "one" / "cf/z0.sfge"), slurp(dir_ / "one" / "sf/z0.sfge"));
}

TEST_F(CliTest, FullClassifierFreeScheduleMakesModesAgree) {
  ASSERT_EQ(run_cli({"compare", "--prompt", "a red square", "--ts", "20", "--out", at("c")}).code, 0);
  EXPECT_EQ(slurp(dir_ / "c" / "cf/z0.sfge"), slurp(dir_ / "c" / "sf/z0.sfge"));
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  {
    std::ofstream cfg(dir_ / "run.ini");
    cfg << "# comment line\nprompt=a green circle below a yellow square\nseed=5\nwbar=1.5\n";
  }
  const Outcome r = run_cli({"sample", "--config", at("run.ini"), "--seed", "9", "--out", at("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string snap = slurp(dir_ / "o" / "run_config.ini");
  EXPECT_EQ(snap.rfind("# sfg sample\n", 0), 0u);
  EXPECT_NE(snap.find("\nprompt=a green circle below a yellow square\n"), std::string::npos);
  EXPECT_NE(snap.find("\nseed=9\n"), std::string::npos);
  EXPECT_NE(snap.find("\nwbar=1.5\n"), std::string::npos);
  EXPECT_NE(snap.find("\nw=7.5\n"), std::string::npos);

  // The snapshot is itself a valid config and reproduces the run.
  const Outcome again = run_cli({"sample", "--config", at("o/run_config.ini"), "--out", at("p")});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(dir_ / "o" / "z0.sfge"), slurp(dir_ / "p" / "z0.sfge"));
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  ::setenv("SFG_OUT_DIR", at("env").c_str(), 1);
  const Outcome r = run_cli({"sample", "--prompt", "a red square"});
  ::unsetenv("SFG_OUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "env" / "z0.pgm"));
}

TEST_F(CliTest, SubsetFromScoresFile) {
  {
    std::ofstream corpus(dir_ / "corpus.txt"), scores(dir_ / "scores.txt");
    scores << "score\n";
    for (int i = 0; i < 5000; ++i) {
      corpus << "prompt " << i << '\n';
      scores << (i * 7919) % 5000 << '\n';
    }
  }
  const Outcome r = run_cli({"subset", "--corpus", at("corpus.txt"), "--scores", at("scores.txt"), "--out", at("s")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(dir_ / "s" / "subset.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "band,rank,prompt,score");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 150);
  EXPECT_NE(r.out.find("band 90: 50 prompts around rank 4500"), std::string::npos);

  EXPECT_EQ(run_cli({"subset", "--corpus", at("corpus.txt"), "--scores", at("scores.txt"), "--total", "100",
                     "--out", at("s")})
                .code,
            sfg::cli::kExitUsage);
}

TEST_F(CliTest, FrechetAndCurve) {
  {
    std::ofstream a(dir_ / "a.csv"), b(dir_ / "b.csv");
    for (int i = 0; i < 10; ++i) {
      a << i << ',' << (i % 3) << '\n';
      b << i + 2 << ',' << (i % 3) << '\n';
    }
  }
  const Outcome f = run_cli({"frechet", at("a.csv"), at("b.csv"), "--out", at("f")});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_NEAR(std::stod(f.out), 4.0, 1e-9);

  const Outcome c = run_cli({"curve", "--corpus-size", "400", "--sizes", "20,400", "--trials", "3", "--out", at("c")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(slurp(dir_ / "c" / "curve.csv").rfind("size,mean,std\n20,", 0), 0u);
}

TEST_F(CliTest, BenchAndDumpAttention) {
  const Outcome b = run_cli({"bench", "--repeats", "3", "--out", at("b")});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(slurp(dir_ / "b" / "bench.csv").find("\nsf,"), std::string::npos);

  const Outcome d = run_cli({"dump-attn", "--prompt", "a red square", "--at-step", "3", "--out", at("d")});
  ASSERT_EQ(d.code, 0) << d.err;
  for (const char* f : {"attn_l0_tok0.pgm", "attn_l1_tok3.pgm", "semantic_l1.pgm"}) {
    EXPECT_TRUE(fs::exists(dir_ / "d" / f)) << f;
  }
  EXPECT_EQ(run_cli({"dump-attn", "--prompt", "", "--out", at("d")}).code, sfg::cli::kExitData);
}

}  // namespace
