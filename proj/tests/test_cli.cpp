#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ler/lten.hpp"
#include "ler/viz.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;  // stdout and stderr
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "'" LER_CLI_PATH "' " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

// A small corpus and a one-epoch-per-stage run shared by the slower tests.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    auto d = ler::testing::scratch_dir("cli_run");
    run("gen-corpus --out " + (d / "train").string() + " --count 4 --seed 3");
    run("gen-corpus --out " + (d / "test").string() + " --count 2 --seed 3 --split test");
    const auto r = run("train --run " + (d / "run").string() + " --set train_corpus=" + (d / "train").string() +
                       " --set eval_corpus=" + (d / "test").string() +
                       " --set stage1_epochs=1 --set stage2_epochs=1 --set batch_size=2",
                       "LER_SEED=123");
    EXPECT_EQ(r.status, 0) << r.output;
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, HelpOnEveryCommand) {
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"", {"gen-corpus", "train", "eval", "infer", "viz-attn", "ids"}},
      {"gen-corpus", {"--out", "--count", "--seed", "--split", "--vocab"}},
      {"train", {"--config", "--set", "--run"}},
      {"eval", {"--checkpoint", "--corpus", "--out", "--min-lacc", "--min-ned", "--localization-only", "--set"}},
      {"infer", {"--checkpoint", "--preset"}},
      {"viz-attn", {"--checkpoint", "--image", "--out"}},
      {"ids", {"parse", "flatten", "charset"}},
      {"ids parse", {"--vocab"}},
      {"ids flatten", {"--padded", "--length", "--max-depth"}},
      {"ids charset", {"--count", "--seed", "--max-depth"}},
  };
  for (const auto& [cmd, flags] : commands) {
    const auto r = run(cmd + " --help");
    EXPECT_EQ(r.status, 0) << cmd;
    for (const auto& f : flags) EXPECT_TRUE(contains(r.output, f)) << cmd << " help lacks " << f;
  }
}

TEST(Cli, UnknownOrMissingArgumentsAreUsageErrors) {
  EXPECT_NE(run("").status, 0);
  EXPECT_NE(run("frobnicate").status, 0);
  EXPECT_NE(run("gen-corpus").status, 0);
}

TEST(Cli, NegativeCountIsRejected) {
  const auto dir = ler::testing::scratch_dir("cli_negative");
  const auto r = run("gen-corpus --out " + (dir / "c").string() + " --count -1");
  EXPECT_NE(r.status, 0);
  EXPECT_FALSE(fs::exists(dir / "c" / "manifest.tsv"));
}

TEST(Cli, GenCorpusIsRepeatable) {
  const auto dir = ler::testing::scratch_dir("cli_gen");
  const auto a = run("gen-corpus --out " + (dir / "a").string() + " --count 64 --seed 7");
  const auto b = run("gen-corpus --out " + (dir / "b").string() + " --count 64 --seed 7");
  ASSERT_EQ(a.status, 0) << a.output;
  ASSERT_EQ(b.status, 0);
  EXPECT_EQ(slurp(dir / "a" / "manifest.tsv"), slurp(dir / "b" / "manifest.tsv"));
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "images")) images += e.path().extension() == ".lten";
  EXPECT_EQ(images, 64u);
  EXPECT_TRUE(contains(a.output, "manifest digest"));
  const auto zero = run("gen-corpus --out " + (dir / "z").string() + " --count 0");
  EXPECT_EQ(zero.status, 0);
  const auto manifest = slurp(dir / "z" / "manifest.tsv");
  EXPECT_EQ(std::count(manifest.begin(), manifest.end(), '\n'), 1);
}

TEST(Cli, IdsParseAndFlatten) {
  auto r = run("ids parse \"LR r1 r2\"");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.output, "LR(r1, r2)\n");
  r = run("ids flatten \"LR(r1, r2)\"");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.output, "LR r1 r2\n");
  r = run("ids flatten \"LR(r1, r2)\" --padded --length 6");
  EXPECT_EQ(r.output, "LR r1 r2 <end> <pad> <pad>\n");
  r = run("ids parse \"LR r1\"");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(contains(r.output, "truncated")) << r.output;
  r = run("ids charset --count 5 --seed 2");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(std::count(r.output.begin(), r.output.end(), '\n'), 5);
}

TEST(Cli, TrainWritesRunDirectory) {
  const auto run_dir = trained_run() / "run";
  for (const char* f : {"config.echo", "ckpt_stage1.lckpt", "ckpt_final.lckpt", "log.tsv", "eval.tsv"}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  const auto log = slurp(run_dir / "log.tsv");
  EXPECT_EQ(log.substr(0, log.find('\n')),
            "stage\tepoch\tstep\tlr\tloss_loc\tloss_char\tloss_ids\tloss_total\teval_lacc\teval_ned");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
  EXPECT_TRUE(contains(slurp(run_dir / "config.echo"), "seed=123\n"));
  EXPECT_TRUE(contains(slurp(run_dir / "eval.tsv"), "corpus\tcount\tlacc\tned\n"));
  EXPECT_NE(slurp(run_dir / "ckpt_stage1.lckpt"), slurp(run_dir / "ckpt_final.lckpt"));
}

TEST(Cli, EvalGatesOnThresholds) {
  const auto d = trained_run();
  const std::string base = "eval --checkpoint " + (d / "run" / "ckpt_final.lckpt").string() + " --corpus " + (d / "test").string();
  auto r = run(base + " --out " + (d / "report.tsv").string());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(d / "report.tsv"));
  EXPECT_EQ(run(base + " --min-lacc 1.5").status, 1);
  EXPECT_EQ(run(base + " --min-ned 1.5").status, 1);
}

TEST(Cli, EvalWithOtherPresetReportsDigest) {
  const auto d = trained_run();
  const auto r = run("eval --checkpoint " + (d / "run" / "ckpt_final.lckpt").string() + " --corpus " +
                     (d / "test").string() + " --set preset=s");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(contains(r.output, "digest")) << r.output;
}

TEST(Cli, InferOnBlankImage) {
  const auto d = trained_run();
  ler::save_lten((d / "blank.lten").string(), ler::Tensor::zeros({32, 128}));
  const auto r = run("infer --checkpoint " + (d / "run" / "ckpt_final.lckpt").string() + " " + (d / "blank.lten").string());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(contains(r.output, "blank.lten\t"));
  ler::save_lten((d / "wrong.lten").string(), ler::Tensor::zeros({16, 16}));
  EXPECT_NE(run("infer --checkpoint " + (d / "run" / "ckpt_final.lckpt").string() + " " + (d / "wrong.lten").string()).status, 0);
  EXPECT_NE(run("infer --preset s --checkpoint " + (d / "run" / "ckpt_final.lckpt").string() + " " + (d / "blank.lten").string()).status, 0);
}

TEST(Cli, VizAttnWritesOneMapPerPosition) {
  const auto d = trained_run();
  const auto r = run("viz-attn --checkpoint " + (d / "run" / "ckpt_final.lckpt").string() + " --image " +
                     (d / "train" / "images" / "train_000000.lten").string() + " --out " + (d / "viz").string());
  ASSERT_EQ(r.status, 0) << r.output;
  for (int j = 0; j < 6; ++j) {
    const auto img = ler::read_pgm((d / "viz" / ("att_" + std::to_string(j) + ".pgm")).string());
    EXPECT_EQ(img.width, 128u);
    EXPECT_EQ(img.height, 32u);
  }
  EXPECT_FALSE(fs::exists(d / "viz" / "att_6.pgm"));
}

TEST(Cli, BadConfigKeyIsReported) {
  const auto d = trained_run();
  const auto r = run("train --run " + (d / "bad").string() + " --set no_such_key=1");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(contains(r.output, "no_such_key")) << r.output;
}
