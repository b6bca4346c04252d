#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef PFLAB_CLI_PATH
#error "PFLAB_CLI_PATH must name the pflab executable"
#endif

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(PFLAB_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int raw = pclose(p);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

double value_of(const std::string& out, const std::string& key) {
  const auto pos = out.find(key + "=");
  if (pos == std::string::npos) return std::nan("");
  return std::stod(out.substr(pos + key.size() + 1));
}

}  // namespace

TEST(Cli, TwoGaussLipCatalog) {
  const auto r = run("bounds cor2 --sep 20 --sigma 1 --lambda 0.5");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NEAR(value_of(r.out, "value"), 5.1847e21, 1e-4 * 5.1847e21) << r.out;
  EXPECT_NE(r.out.find("sep=20"), std::string::npos) << r.out;
}

TEST(Cli, TvTwoGaussCatalog) {
  const auto r = run("bounds tv-twogauss --sep 20 --sigma 1 --lip 5");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NEAR(value_of(r.out, "value"), 0.3413446, 1e-7) << r.out;
}

TEST(Cli, KlTwoGaussCatalog) {
  const auto r = run("bounds kl-twogauss --sep 20 --sigma 1 --lip 5 --lambda-push 0.5");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NEAR(value_of(r.out, "value"), 4.737, 1e-3) << r.out;
}

TEST(Cli, BoundsCsvOutput) {
  const fs::path csv = fs::temp_directory_path() / "pflab_cli_bound.csv";
  fs::remove(csv);
  const auto r = run("--out " + csv.string() + " bounds tv-disconnected --lambda 0.5 --dist 2 --lip 1");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NEAR(value_of(r.out, "value"), 0.3413447, 1e-7) << r.out;
  std::ifstream in(csv);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_NE(header.find("value"), std::string::npos) << header;
  EXPECT_FALSE(row.empty());
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("bounds cor2 --sep abc --sigma 1 --lambda 0.5").status, 2);
  EXPECT_EQ(run("bounds nosuch").status, 2);
  EXPECT_EQ(run("--scale medium bounds cor2 --sep 20 --sigma 1 --lambda 0.5").status, 2);
  EXPECT_EQ(run("reproduce fig9").status, 2);
  EXPECT_EQ(run("bounds cor2 --sep 20 --sigma -1 --lambda 0.5").status, 2);
}

TEST(Cli, SampleEstimateRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "pflab_cli_train";
  fs::remove_all(dir);
  auto r = run("--seed 3 train --model vae --m 2 --n 500 --epochs 1 --batch-size 250 --shape 1,8,1 --model-dir " +
               dir.string());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
  const fs::path samples = dir / "samples.csv";
  r = run("--seed 4 --out " + samples.string() + " sample --model-dir " + dir.string() + " --n 300");
  ASSERT_EQ(r.status, 0) << r.out;
  std::ifstream in(samples);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 300u);
  r = run("estimate --samples " + samples.string() + " --m 2");
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_NE(r.out.find("tv="), std::string::npos) << r.out;
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path dir = fs::temp_directory_path() / "pflab_cli_diverge";
  fs::remove_all(dir);
  const auto cfg = fs::temp_directory_path() / "pflab_cli_diverge.cfg";
  std::ofstream(cfg) << "train.lr = 1e6\ntrain.vae_c = 1e-150\n";
  const auto r = run("--config " + cfg.string() + " train --model vae --m 2 --n 500 --epochs 5 --batch-size 250 " +
                     "--shape 1,8,1 --model-dir " + dir.string());
  EXPECT_EQ(r.status, 3) << r.out;
}
