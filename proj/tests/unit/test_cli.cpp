#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "wavevit/checkpoint.hpp"
#include "wavevit/cli/cli.hpp"
#include "wavevit/tensor_io.hpp"
#include "wavevit/wavelet.hpp"

using namespace wavevit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("wavevit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"params", "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"params", "--mode", "sideways"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"bench", "--reps", "0"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"bench", "--height", "7"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"check", "--suite", "nonsense"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"dwt", "--in", "x.wt4d"}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  const Outcome o = invoke({"--help"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("gradcheck"), std::string::npos);
}

TEST(Cli, ParamsReportsCountAndRatio) {
  const Outcome o = invoke({"params", "--model", "wave-vit-s"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("params = 19131944"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("ratio = 0.9663"), std::string::npos) << o.out;
  const Outcome pooled = invoke({"params", "--model", "s", "--mode", "avgpool"});
  EXPECT_EQ(pooled.code, cli::kExitOk);
  EXPECT_EQ(pooled.out.find("19131944"), std::string::npos);
}

TEST(Cli, FlopsPrintsBothConventions) {
  const Outcome o = invoke({"flops", "--model", "wave-vit-s"});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("macs = 5188477056"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("1 FLOP per MAC"), std::string::npos);
  EXPECT_NE(o.out.find("2 FLOPs per MAC"), std::string::npos);
}

TEST(Cli, BenchReportsQuarterScoreCost) {
  const Outcome o = invoke({"bench", "--mode", "none", "--mode", "wavelet", "--height", "8", "--width", "8", "--dim",
                            "8", "--reps", "1", "--warmup", "0"});
  ASSERT_EQ(o.code, cli::kExitUsage) << "warmup 0 is rejected";
  const Outcome ok = invoke({"bench", "--mode", "none", "--mode", "wavelet", "--height", "8", "--width", "8",
                             "--dim", "8", "--reps", "1", "--warmup", "1"});
  ASSERT_EQ(ok.code, cli::kExitOk) << ok.err;
  std::istringstream is(ok.out);
  std::string line, ratio;
  while (std::getline(is, line))
    if (line.rfind("wavelet", 0) == 0) ratio = line.substr(line.find_last_of(' ') + 1);
  EXPECT_EQ(ratio, "4.0000") << ok.out;
}

TEST(Cli, CheckSuitePasses) {
  const Outcome o = invoke({"check", "--suite", "wavelet"});
  EXPECT_EQ(o.code, cli::kExitOk) << o.out;
  EXPECT_EQ(o.out.find("FAIL"), std::string::npos);
}

TEST(Cli, GradcheckSingleOp) {
  const Outcome list = invoke({"gradcheck", "--list"});
  EXPECT_NE(list.out.find("dwt2d_haar_packed"), std::string::npos);
  const Outcome o = invoke({"gradcheck", "--op", "linear", "--seeds", "2"});
  EXPECT_EQ(o.code, cli::kExitOk) << o.out;
  EXPECT_EQ(invoke({"gradcheck", "--op", "no_such_op"}).code, cli::kExitUsage);
}

TEST_F(CliFiles, DwtThenIdwtRoundTrips) {
  Rng rng(1);
  const Tensor4<double> x = oracle::uniform({2, 3, 8, 6}, rng);
  save_wt4d(path("x.wt4d"), x);
  ASSERT_EQ(invoke({"dwt", "--in", path("x.wt4d"), "--out", path("p.wt4d")}).code, cli::kExitOk);
  const Tensor4<double> packed = load_wt4d_as<double>(path("p.wt4d"));
  EXPECT_EQ(packed.shape(), (Shape4{2, 12, 4, 3}));
  EXPECT_LE(oracle::max_abs(packed, subbands_pack(dwt2d_haar(x))), 0.0);
  ASSERT_EQ(invoke({"idwt", "--in", path("p.wt4d"), "--out", path("y.wt4d")}).code, cli::kExitOk);
  EXPECT_LE(rel_error_norm(load_wt4d_as<double>(path("y.wt4d")), x), 1e-12);
}

TEST_F(CliFiles, BadInputFilesExitOne) {
  {
    std::ofstream junk(path("junk.wt4d"), std::ios::binary);
    junk << "not a tensor";
  }
  const Outcome o = invoke({"dwt", "--in", path("junk.wt4d"), "--out", path("o.wt4d")});
  EXPECT_EQ(o.code, cli::kExitFailure);
  EXPECT_NE(o.err.find("magic"), std::string::npos) << o.err;
  EXPECT_EQ(invoke({"dwt", "--in", path("missing.wt4d"), "--out", path("o.wt4d")}).code, cli::kExitFailure);
  save_wt4d(path("odd.wt4d"), Tensor4<double>({1, 1, 3, 4}));
  EXPECT_EQ(invoke({"dwt", "--in", path("odd.wt4d"), "--out", path("o.wt4d")}).code, cli::kExitFailure);
  EXPECT_EQ(invoke({"idwt", "--in", path("odd.wt4d"), "--out", path("o.wt4d")}).code, cli::kExitFailure);
}

TEST_F(CliFiles, TrainThenEvalUsesCheckpoint) {
  const Outcome t = invoke({"train", "--samples", "40", "--epochs", "1", "--batch", "20", "--out", path("m.wvck"),
                            "--report", path("r.txt")});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  EXPECT_TRUE(fs::exists(path("m.wvck")));
  std::ifstream report(path("r.txt"));
  std::string first;
  std::getline(report, first);
  EXPECT_EQ(first.rfind("# ", 0), 0u);
  const Outcome e = invoke({"eval", "--in", path("m.wvck"), "--samples", "40", "--logits", path("l.wt4d")});
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  EXPECT_EQ(load_wt4d_as<float>(path("l.wt4d")).shape(), (Shape4{40, 1, 1, 10}));
  const Outcome wrong = invoke({"eval", "--in", path("m.wvck"), "--mode", "avgpool"});
  EXPECT_EQ(wrong.code, cli::kExitFailure);
}

TEST_F(CliFiles, TrainReportsAreReproducible) {
  for (const char* name : {"a.txt", "b.txt"})
    ASSERT_EQ(invoke({"train", "--samples", "30", "--epochs", "2", "--batch", "10", "--seed", "4", "--report",
                      path(name)})
                  .code,
              cli::kExitOk);
  auto slurp = [](const std::string& p) {
    std::ifstream is(p);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
  EXPECT_FALSE(slurp(path("a.txt")).empty());
}

TEST_F(CliFiles, ConfigFileDrivesParams) {
  {
    std::ofstream cfg(path("m.cfg"));
    cfg << "preset = micro\nname = tiny\n";
  }
  const Outcome o = invoke({"params", "--config", path("m.cfg")});
  EXPECT_EQ(o.code, cli::kExitOk);
  EXPECT_NE(o.out.find("model tiny"), std::string::npos);
  EXPECT_NE(o.out.find("params = 194218"), std::string::npos);
  EXPECT_EQ(invoke({"params", "--config", path("m.cfg"), "--model", "s"}).code, cli::kExitUsage);
  {
    std::ofstream bad(path("bad.cfg"));
    bad << "preset = micro\ncolour = blue\n";
  }
  EXPECT_EQ(invoke({"params", "--config", path("bad.cfg")}).code, cli::kExitFailure);
}
