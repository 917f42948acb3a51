#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "sffnet/sffnet.hpp"

namespace sffnet {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;  // stdout and stderr
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(SFFNET_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sffnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string at(const std::string& rel) const { return (dir_ / rel).string(); }

  fs::path dir_;
};

const std::string kMicro =
    "--set model.base_channels=4 model.mapped_channels=4 model.window_size=2 data.height=32 data.width=32 ";

TEST_F(CliTest, HelpEnumeratesEveryConfigKey) {
  const CliRun r = run("--help");
  EXPECT_EQ(r.code, 0);
  for (const auto& k : config_keys()) EXPECT_NE(r.out.find("  " + k.name + " "), std::string::npos) << k.name;
  for (const char* cmd : {"gen-data", "train", "eval", "decompose", "gradcheck", "ablate", "params"})
    EXPECT_NE(r.out.find(cmd), std::string::npos) << cmd;
}

TEST_F(CliTest, ExampleConfigCoversEveryKeyWithDefaults) {
  const std::string text = slurp(fs::path(SFFNET_SOURCE_DIR) / "tools/configs/example.cfg");
  std::set<std::string> seen;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);)
    if (!line.empty() && line[0] != '#' && line.find('=') != std::string::npos)
      seen.insert(config_detail::trim(line.substr(0, line.find('='))));
  for (const auto& k : config_keys()) EXPECT_TRUE(seen.count(k.name)) << k.name;
  RunConfig parsed;
  apply_config_text(parsed, text, "example.cfg");
  EXPECT_EQ(serialize_config(parsed), serialize_config(RunConfig{}));
  for (const char* f : {"overfit.cfg", "ablation.cfg"}) {
    RunConfig c;
    EXPECT_NO_THROW(apply_config_text(c, slurp(fs::path(SFFNET_SOURCE_DIR) / "tools/configs" / f), f)) << f;
    EXPECT_NO_THROW(validate(c)) << f;
  }
}

TEST_F(CliTest, UsageAndIoErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("train --out x").code, 2);
  const CliRun missing = run("train --data " + at("nope") + " --out " + at("run"));
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.out.find("does not exist"), std::string::npos) << missing.out;
  const CliRun key = run("params --set model.depth=3");
  EXPECT_EQ(key.code, 2);
  EXPECT_NE(key.out.find("model.depth"), std::string::npos);
  EXPECT_EQ(run("eval --checkpoint " + at("none.ckpt") + " --data " + at("d")).code, 2);
}

TEST_F(CliTest, GenDataIsByteReproducibleAndHandlesZeroCount) {
  ASSERT_EQ(run("gen-data --out " + at("a") + " --count 4 --seed 3 " + kMicro).code, 0);
  ASSERT_EQ(run("gen-data --out " + at("b") + " --count 4 --seed 3 " + kMicro).code, 0);
  for (const char* f : {"manifest.csv", "images/000.png", "images/003.png", "masks/002.png"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  EXPECT_EQ(slurp(dir_ / "a/manifest.csv"), "index,split\n000,train\n001,train\n002,train\n003,val\n");
  ASSERT_EQ(run("gen-data --out " + at("c") + " --count 4 --seed 4 " + kMicro).code, 0);
  EXPECT_NE(slurp(dir_ / "a/images/000.png"), slurp(dir_ / "c/images/000.png"));

  const CliRun empty = run("gen-data --out " + at("e") + " --count 0");
  EXPECT_EQ(empty.code, 0);
  EXPECT_EQ(slurp(dir_ / "e/manifest.csv"), "index,split\n");
  EXPECT_TRUE(load_dataset(dir_ / "e").empty());
}

TEST_F(CliTest, HundredTilesOf128GenerateWithinOneMinute) {
  const auto t0 = std::chrono::steady_clock::now();
  ASSERT_EQ(run("gen-data --out " + at("big") + " --count 100 --set data.height=128 data.width=128").code, 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 60.0);
  EXPECT_EQ(load_dataset(dir_ / "big").size(), 100u);
}

TEST_F(CliTest, TrainEvalResumeRoundTrip) {
  const std::string cfg = kMicro + "train.batch_size=2 train.epochs=2 data.eval_split= data.val_fraction=0 ";
  ASSERT_EQ(run("gen-data --out " + at("d") + " --count 4 " + cfg).code, 0);
  const CliRun t = run("train --data " + at("d") + " --out " + at("run") + " " + cfg);
  ASSERT_EQ(t.code, 0) << t.out;
  const Checkpoint first = load_checkpoint(dir_ / "run/last.ckpt");
  EXPECT_EQ(first.step, 4);

  const CliRun resumed = run("train --data " + at("d") + " --out " + at("run") + " --resume " + at("run/last.ckpt") +
                          " " + kMicro + "train.batch_size=2 train.epochs=3 data.eval_split=");
  ASSERT_EQ(resumed.code, 0) << resumed.out;
  const Checkpoint last = load_checkpoint(dir_ / "run/last.ckpt");
  EXPECT_EQ(last.step, 6);
  EXPECT_EQ(last.epoch, 2);

  // The log carries the config as provenance and one row per epoch.
  const std::string log = slurp(dir_ / "run/train_log.csv");
  EXPECT_NE(log.find("# model.base_channels = 4"), std::string::npos);
  std::size_t rows = 0;
  for (std::size_t p = 0; (p = log.find("\n", p)) != std::string::npos; ++p) ++rows;
  EXPECT_EQ(rows, config_keys().size() + 1 + 3);

  const Checkpoint best = load_checkpoint(dir_ / "run/best.ckpt");
  const CliRun e = run("eval --checkpoint " + at("run/best.ckpt") + " --data " + at("d") + " --split train --out " +
                    at("m/metrics.csv"));
  ASSERT_EQ(e.code, 0) << e.out;
  const std::string csv = slurp(dir_ / "m/metrics.csv");
  const auto summary = csv.substr(csv.find("summary,"));
  std::vector<double> v;
  std::istringstream fields(summary.substr(8));
  for (std::string f; std::getline(fields, f, ',');) v.push_back(std::stod(f));
  ASSERT_EQ(v.size(), 5u);
  EXPECT_NEAR(v[3], best.best_miou, 1e-6);

  // Per-class rows agree with metrics recomputed from the dumped confusion matrix.
  ConfusionMatrix cm(6, 255);
  std::istringstream cm_lines(slurp(dir_ / "m/metrics.confusion.csv"));
  std::string line;
  std::getline(cm_lines, line);
  std::vector<std::uint64_t> counts;
  for (int i = 0; i < 6 && std::getline(cm_lines, line); ++i) {
    std::istringstream cells(line);
    std::string c;
    std::getline(cells, c, ',');
    for (int j = 0; j < 6 && std::getline(cells, c, ','); ++j) {
      const std::uint64_t n = std::stoull(c);
      LabelMap truth(1, 1, 1, i), pred(1, 1, 1, j);
      for (std::uint64_t k = 0; k < n; ++k) cm.accumulate(pred, truth);
    }
  }
  EXPECT_EQ(csv, metrics_csv(compute_metrics(cm, {kClutter}), class_names()));

  const CliRun empty = run("eval --checkpoint " + at("run/best.ckpt") + " --data " + at("d") + " --split nothing --out " +
                        at("m/empty.csv"));
  EXPECT_EQ(empty.code, 0);
  EXPECT_NE(empty.out.find("warning"), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "m/empty.csv"), "class,precision,recall,F1,IoU,OA\n");

  const CliRun p = run("params --checkpoint " + at("run/best.ckpt"));
  EXPECT_EQ(p.code, 0) << p.out;
  EXPECT_NE(p.out.find("checkpoint parameter tensors"), std::string::npos);
}

TEST_F(CliTest, DecomposeConstantAndEdgeCards) {
  Tensor<float> flat(Shape{1, 3, 16, 16}, 0.4f);
  write_image_png(dir_ / "flat.png", flat);
  const CliRun r = run("decompose --image " + at("flat.png") + " --out " + at("flat"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PSNR inf dB"), std::string::npos) << r.out;
  const Tensor<float> a = read_image_png(dir_ / "flat/A.png");
  for (float v : a.data()) EXPECT_FLOAT_EQ(v, a[0]);
  for (const char* band : {"H.png", "V.png", "D.png"}) {
    const Tensor<float> img = read_image_png(dir_ / "flat" / band);
    for (float v : img.data()) EXPECT_EQ(v, 0.0f) << band;
  }

  // Stripes of width one column: an edge between every pair of columns.
  Tensor<float> card(Shape{1, 3, 16, 15});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 15; ++j) card(0, c, i, j) = j % 2 ? 0.9f : 0.1f;
  write_image_png(dir_ / "card.png", card);
  const CliRun e = run("decompose --image " + at("card.png") + " --out " + at("card"));
  ASSERT_EQ(e.code, 0) << e.out;
  const double psnr = std::stod(e.out.substr(e.out.find("PSNR ") + 5));
  EXPECT_GE(psnr, 120.0);
  const std::string bands = slurp(dir_ / "card/bands.csv");
  EXPECT_NE(bands.find("\nV,"), std::string::npos);
  std::istringstream rows(bands);
  std::string row;
  std::getline(rows, row);
  while (std::getline(rows, row)) {
    const auto share = row.substr(row.rfind(',') + 1);
    if (row[0] == 'V') EXPECT_GE(std::stod(share), 0.99) << row;
    if (row[0] == 'H' || row[0] == 'D') EXPECT_LE(std::stod(share), 0.01) << row;
  }
}

TEST_F(CliTest, GradcheckReportsAndNegativeControlFails) {
  const CliRun ok = run("gradcheck --module op --seed 5");
  EXPECT_EQ(ok.code, 0) << ok.out;
  for (const char* m : {"conv2d", "softmax", "cross_entropy", "haar_dwt"}) EXPECT_NE(ok.out.find(m), std::string::npos);
  EXPECT_NE(ok.out.find("max_rel_err"), std::string::npos);
  const CliRun bad = run("gradcheck --module wtfd --inject-fault");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(run("gradcheck --module nonsense").code, 2);
}

TEST_F(CliTest, AblateWritesOneRowPerVariant) {
  const std::string cfg = kMicro + "train.epochs=1 train.batch_size=2 ";
  ASSERT_EQ(run("gen-data --out " + at("d") + " --count 4 " + cfg).code, 0);
  const CliRun r = run("ablate --data " + at("d") + " --seeds 1 --out " + at("abl.csv") + " " + cfg);
  ASSERT_EQ(r.code, 0) << r.out;
  std::istringstream lines(slurp(dir_ / "abl.csv"));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, ablation_csv_header());
  for (const auto& v : ablation_variant_names()) {
    ASSERT_TRUE(std::getline(lines, line));
    EXPECT_EQ(line.substr(0, line.find(',')), v);
  }
  EXPECT_FALSE(std::getline(lines, line));
}

}  // namespace
}  // namespace sffnet
