#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "rddm/cli.hpp"
#include "rddm/config.hpp"
#include "rddm/trainer.hpp"

namespace rddm {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> v;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) v.push_back(line);
  return v;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("rddm_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const Json& j, const std::string& name = "cfg.json") {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  // Small data and a small generator so a full pipeline runs in about a second.
  Json small_config() const {
    Json j;
    j["simulate"] = {{"train_count", 4}, {"test_count", 3}, {"flat_count", 1}, {"size", 16}, {"flat_size", 64}};
    j["train"] = {{"iterations", 3},
                  {"batch", 2},
                  {"patch", 8},
                  {"log_every", 1},
                  {"generator", {{"base_channels", 4}, {"depth", 2}}}};
    return j;
  }

  fs::path dir_;
};

TEST_F(CliTest, SimulateWritesSplitsWithRequestedCounts) {
  const auto cfg = write_config(small_config());
  const auto r = run({"simulate", "--config", cfg.string(), "--out", (dir_ / "data").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto train = read_image_set(dir_ / "data" / "train.rddi");
  const auto test = read_image_set(dir_ / "data" / "test.rddi");
  const auto flat = read_image_set(dir_ / "data" / "flat.rddi");
  EXPECT_EQ(train.x.shape(), (Shape{4, 1, 16, 16}));
  EXPECT_EQ(train.y.shape(), (Shape{4, 1, 16, 16}));
  EXPECT_EQ(test.x.dim(0), 3u);
  EXPECT_EQ(flat.x.shape(), (Shape{1, 1, 64, 64}));
  EXPECT_NE(r.out.find("split=train count=4 size=16"), std::string::npos);
}

TEST_F(CliTest, SimulateWithZeroNoiseGivesCleanPairs) {
  auto j = small_config();
  j["simulate"]["noise"] = {{"gaussian_sigma", 0.0}, {"streak_sigma", 0.0}, {"ndct_sigma", 0.0}};
  const auto cfg = write_config(j);
  const auto r = run({"simulate", "--config", cfg.string(), "--out", dir_.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto train = read_image_set(dir_ / "train.rddi");
  for (std::size_t i = 0; i < train.x.numel(); ++i) ASSERT_EQ(train.x[i], train.y[i]);
  EXPECT_NE(r.out.find("residual_std=0 "), std::string::npos);
}

TEST_F(CliTest, SimulateIsByteIdenticalForOneSeed) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", (dir_ / "a").string(), "--seed", "5"}).code, kExitOk);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", (dir_ / "b").string(), "--seed", "5"}).code, kExitOk);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", (dir_ / "c").string(), "--seed", "6"}).code, kExitOk);
  for (const char* f : {"train.rddi", "test.rddi", "flat.rddi"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    EXPECT_NE(slurp(dir_ / "a" / f), slurp(dir_ / "c" / f)) << f;
  }
}

TEST_F(CliTest, TrainResolvesVariantPreset) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                      (dir_ / "m.ckpt").string(), "--variant", "fine"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto ckpt = load_checkpoint(dir_ / "m.ckpt");
  const auto fine = preset(Variant::fine);
  EXPECT_EQ(ckpt.config.drift.temperatures, fine.temperatures);
  EXPECT_EQ(ckpt.config.drift.lambda, fine.lambda);
  EXPECT_EQ(ckpt.iteration, 3u);
  EXPECT_NE(r.out.find("\"variant\":\"fine\""), std::string::npos);
}

TEST_F(CliTest, ExplicitTemperaturesOverrideVariant) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                      (dir_ / "m.ckpt").string(), "--variant", "smooth", "--temperatures", "0.5,2", "--lambda", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto ckpt = load_checkpoint(dir_ / "m.ckpt");
  EXPECT_EQ(ckpt.config.drift.temperatures, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(ckpt.config.drift.lambda, 0.0);
  EXPECT_EQ(r.out.find("\"variant\""), std::string::npos);
}

TEST_F(CliTest, UnknownVariantIsUsageError) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                      (dir_ / "m.ckpt").string(), "--variant", "sharp"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("fine"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "m.ckpt"));
}

TEST_F(CliTest, ZeroIterationsWritesInitialState) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                      (dir_ / "m.ckpt").string(), "--iterations", "0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto ckpt = load_checkpoint(dir_ / "m.ckpt");
  EXPECT_EQ(ckpt.iteration, 0u);
  const auto init = init_state(ckpt.config);
  for (std::size_t t = 0; t < init.params.tensors.size(); ++t) {
    const auto a = init.params.tensors[t].second.data();
    const auto b = ckpt.params.tensors[t].second.data();
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST_F(CliTest, TrainLogFileMatchesStdout) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                      (dir_ / "m.ckpt").string(), "--log", (dir_ / "train.log").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto log = lines_of(slurp(dir_ / "train.log"));
  const auto out = lines_of(r.out);
  EXPECT_EQ(log, out);
  EXPECT_EQ(out.at(0).rfind("config train ", 0), 0u);
  std::size_t iter_lines = 0;
  for (const auto& l : out) iter_lines += l.rfind("iter=", 0) == 0;
  EXPECT_EQ(iter_lines, 3u);
}

TEST_F(CliTest, ResumeMatchesUninterruptedRun) {
  const auto cfg = write_config(small_config());
  const auto data = (dir_ / "train.rddi").string();
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", data, "--out", (dir_ / "full.ckpt").string()}).code,
            kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", data, "--out", (dir_ / "half.ckpt").string(),
                 "--iterations", "1"})
                .code,
            kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", data, "--out", (dir_ / "rest.ckpt").string(),
                      "--resume", (dir_ / "half.ckpt").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("resume iteration=1"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "full.ckpt"), slurp(dir_ / "rest.ckpt"));
}

TEST_F(CliTest, ResumeWithDifferentSettingsIsRejected) {
  const auto cfg = write_config(small_config());
  const auto data = (dir_ / "train.rddi").string();
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--data", data, "--out", (dir_ / "a.ckpt").string()}).code,
            kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", data, "--out", (dir_ / "b.ckpt").string(),
                      "--resume", (dir_ / "a.ckpt").string(), "--lambda", "0.5"});
  EXPECT_EQ(r.code, kExitUsage);
}

class PipelineTest : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    cfg_ = write_config(small_config());
    ASSERT_EQ(run({"simulate", "--config", cfg_.string(), "--out", dir_.string()}).code, kExitOk);
    ASSERT_EQ(run({"train", "--config", cfg_.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                   (dir_ / "m.ckpt").string()})
                  .code,
              kExitOk);
  }
  CliResult run_denoise(const std::string& output, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"denoise", "--config", cfg_.string(), "--checkpoint", (dir_ / "m.ckpt").string(),
                                  "--input", (dir_ / "test.rddi").string(), "--output", (dir_ / output).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  }
  fs::path cfg_;
};

TEST_F(PipelineTest, DenoiseUsesOneEvaluationPerImage) {
  const auto r = run_denoise("den.rddi");
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("images=3 nfe=3 "), std::string::npos) << r.out;
  const auto in = read_image_set(dir_ / "test.rddi");
  const auto den = read_image_set(dir_ / "den.rddi");
  EXPECT_EQ(den.x.shape(), in.y.shape());
  // the noisy input travels along as 'y'
  const auto a = in.y.data();
  const auto b = den.y.data();
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

TEST_F(PipelineTest, DenoiseIsBitIdenticalForOneSeed) {
  ASSERT_EQ(run_denoise("a.rddi", {"--seed", "3"}).code, kExitOk);
  ASSERT_EQ(run_denoise("b.rddi", {"--seed", "3"}).code, kExitOk);
  ASSERT_EQ(run_denoise("c.rddi", {"--seed", "4"}).code, kExitOk);
  EXPECT_EQ(slurp(dir_ / "a.rddi"), slurp(dir_ / "b.rddi"));
  EXPECT_NE(slurp(dir_ / "a.rddi"), slurp(dir_ / "c.rddi"));
}

TEST_F(PipelineTest, RawWeightsDifferFromEma) {
  ASSERT_EQ(run_denoise("ema.rddi").code, kExitOk);
  ASSERT_EQ(run_denoise("raw.rddi", {"--raw-weights"}).code, kExitOk);
  EXPECT_NE(slurp(dir_ / "ema.rddi"), slurp(dir_ / "raw.rddi"));
}

TEST_F(PipelineTest, DenoiseExportsPngs) {
  const auto r = run_denoise("den.rddi", {"--png-dir", (dir_ / "png").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (const char* f : {"00000.png", "00001.png", "00002.png"}) {
    const auto bytes = slurp(dir_ / "png" / f);
    ASSERT_GE(bytes.size(), 8u) << f;
    EXPECT_EQ(bytes.substr(1, 3), "PNG") << f;
  }
}

TEST_F(PipelineTest, EvalOfIdenticalImagesIsPerfect) {
  const auto out = dir_ / "eval";
  const auto r = run({"eval", "--pred", (dir_ / "test.rddi").string(), "--ref", (dir_ / "test.rddi").string(),
                      "--out-dir", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines_of(slurp(out / "metrics.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "slice_index,psnr,ssim");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i], std::to_string(i - 1) + ",99,1");
  EXPECT_EQ(lines_of(slurp(out / "rps.csv")).at(0), "freq,power");
  // 16x16 test images hold no 64x64 ROI
  EXPECT_NE(r.out.find("nps skipped"), std::string::npos);
}

TEST_F(PipelineTest, EvalReportsNoiseSpectrumOnFlatImages) {
  const auto out = dir_ / "eval";
  const auto r = run({"eval", "--pred", (dir_ / "flat.rddi").string(), "--pred-tensor", "y", "--ref",
                      (dir_ / "flat.rddi").string(), "--out-dir", out.string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("nps rois="), std::string::npos) << r.out;
  const auto rows = lines_of(slurp(out / "nps.csv"));
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows[0], "freq,power");
}

TEST_F(PipelineTest, EvalCountMismatchIsDataError) {
  const auto r = run({"eval", "--pred", (dir_ / "test.rddi").string(), "--ref", (dir_ / "train.rddi").string(),
                      "--out-dir", (dir_ / "eval").string()});
  EXPECT_EQ(r.code, kExitData);
}

TEST_F(PipelineTest, EvalMissingTensorIsDataError) {
  const auto den = run_denoise("den.rddi");
  ASSERT_EQ(den.code, kExitOk);
  write_image_set(dir_ / "only_x.rddi", ImageSet{read_image_set(dir_ / "den.rddi").x, Tensor{}});
  const auto r = run({"eval", "--pred", (dir_ / "only_x.rddi").string(), "--pred-tensor", "y", "--ref",
                      (dir_ / "test.rddi").string(), "--out-dir", (dir_ / "eval").string()});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("'y'"), std::string::npos);
}

TEST_F(CliTest, ConfigEchoReproducesTheRun) {
  auto j = small_config();
  j["simulate"]["noise"] = {{"gaussian_sigma", 0.03}};
  const auto cfg = write_config(j);
  const auto first = run({"simulate", "--config", cfg.string(), "--out", (dir_ / "a").string(), "--seed", "9"});
  ASSERT_EQ(first.code, kExitOk);
  const auto echo = lines_of(first.out).at(0);
  const std::string prefix = "config simulate ";
  ASSERT_EQ(echo.rfind(prefix, 0), 0u);
  const auto echoed = write_config(Json::parse(echo.substr(prefix.size())), "echo.json");
  const auto second = run({"simulate", "--config", echoed.string(), "--out", (dir_ / "b").string()});
  ASSERT_EQ(second.code, kExitOk);
  EXPECT_EQ(lines_of(second.out).at(0), echo);
  EXPECT_EQ(slurp(dir_ / "a" / "train.rddi"), slurp(dir_ / "b" / "train.rddi"));
}

TEST_F(CliTest, UnknownConfigKeyIsUsageError) {
  auto j = small_config();
  j["train"]["learning_rate"] = 0.1;
  const auto cfg = write_config(j);
  const auto r = run({"simulate", "--config", cfg.string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
}

TEST_F(CliTest, BadNoiseConfigIsUsageError) {
  auto j = small_config();
  j["simulate"]["noise"] = {{"gaussian_sigma", -1.0}};
  const auto r = run({"simulate", "--config", write_config(j).string(), "--out", dir_.string()});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(CliTest, InvalidTrainConfigIsUsageError) {
  auto j = small_config();
  j["train"]["batch"] = 0;
  ASSERT_EQ(run({"simulate", "--config", write_config(j).string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", (dir_ / "cfg.json").string(), "--data", (dir_ / "train.rddi").string(),
                      "--out", (dir_ / "m.ckpt").string()});
  EXPECT_EQ(r.code, kExitUsage);
}

TEST_F(CliTest, MissingRequiredOptionIsUsageError) {
  EXPECT_EQ(run({"simulate"}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({}).code, kExitUsage);
}

TEST_F(CliTest, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("simulate"), std::string::npos);
}

TEST_F(CliTest, MissingDataFileIsDataError) {
  const auto r = run({"train", "--data", (dir_ / "nope.rddi").string(), "--out", (dir_ / "m.ckpt").string()});
  EXPECT_EQ(r.code, kExitData);
}

TEST_F(CliTest, CorruptCheckpointIsDataError) {
  const auto cfg = write_config(small_config());
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  std::ofstream(dir_ / "bad.ckpt") << "not a checkpoint";
  const auto r = run({"denoise", "--checkpoint", (dir_ / "bad.ckpt").string(), "--input",
                      (dir_ / "test.rddi").string(), "--output", (dir_ / "o.rddi").string()});
  EXPECT_EQ(r.code, kExitData);
}

TEST_F(CliTest, PatchLargerThanImagesIsRejected) {
  auto j = small_config();
  j["train"]["patch"] = 32;
  const auto cfg = write_config(j);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--out", dir_.string()}).code, kExitOk);
  const auto r = run({"train", "--config", cfg.string(), "--data", (dir_ / "train.rddi").string(), "--out",
                      (dir_ / "m.ckpt").string()});
  EXPECT_NE(r.code, kExitOk);
  EXPECT_NE(r.err.find("patch"), std::string::npos);
}

}  // namespace
}  // namespace rddm
