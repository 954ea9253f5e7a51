#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "sdrsac/cli.hpp"

using namespace sdrsac;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "sdrsac");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           (std::string("sdrsac_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string file(const std::string& name) const { return (dir_ / name).string(); }

  // Synthetic pair on disk; returns the synth stdout.
  CliRun synth(const std::string& tag, std::size_t n, double rate, double sigma, int seed, bool corr = false) {
    std::vector<std::string> args{"synth",          "--n",           std::to_string(n),
                                  "--outlier-rate", std::to_string(rate), "--noise-sigma",
                                  std::to_string(sigma), "--seed",        std::to_string(seed),
                                  "--out-source",   file(tag + "_s.ply"), "--out-target",
                                  file(tag + "_d.ply"), "--out-truth",   file(tag + "_t.txt")};
    if (corr) {
      args.insert(args.end(), {"--out-correspondences", file(tag + "_c.txt"), "--rewire", "0.5"});
    }
    return invoke(args);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SelfRegistrationWithDefaults) {
  ASSERT_EQ(synth("a", 300, 0.0, 0.0, 1).code, 0);
  const CliRun r = invoke({"register", "--source", file("a_s.ply"), "--target", file("a_s.ply")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.err.empty());
  const RunReport rep = report_from_json(nlohmann::ordered_json::parse(r.out));
  EXPECT_EQ(rep.consensus, 300u);
  EXPECT_LT(rotation_error_deg(rep.transform.rotation(), Mat3::Identity()), 1e-6);
  EXPECT_FALSE(rep.wall_time_s.has_value());
  EXPECT_EQ(rep.config.at("nsample"), 16);
}

TEST_F(CliTest, SynthIsByteIdenticalAcrossRuns) {
  const CliRun a = synth("x", 500, 0.3, 0.01, 7);
  const std::string s1 = slurp(file("x_s.ply")), d1 = slurp(file("x_d.ply")), t1 = slurp(file("x_t.txt"));
  const CliRun b = synth("x", 500, 0.3, 0.01, 7);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(s1, slurp(file("x_s.ply")));
  EXPECT_EQ(d1, slurp(file("x_d.ply")));
  EXPECT_EQ(t1, slurp(file("x_t.txt")));
  EXPECT_EQ(nlohmann::json::parse(a.out).at("target_points"), 350);
}

TEST_F(CliTest, SameSeedReportsAreByteIdentical) {
  ASSERT_EQ(synth("p", 400, 0.2, 0.005, 3).code, 0);
  const std::vector<std::string> args{"register", "--source", file("p_s.ply"), "--target", file("p_d.ply"),
                                      "--seed",   "5",        "--max-iter",    "8",         "--truth",
                                      file("p_t.txt")};
  const CliRun a = invoke(args), b = invoke(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_TRUE(j.contains("rotation_error_deg"));
  EXPECT_TRUE(j.contains("translation_error"));
}

TEST_F(CliTest, TimingFlagAddsWallTime) {
  ASSERT_EQ(synth("t", 300, 0.0, 0.0, 2).code, 0);
  const CliRun r = invoke({"register", "--source", file("t_s.ply"), "--target", file("t_d.ply"), "--method", "icp",
                     "--timing"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).contains("wall_time_s"));
}

TEST_F(CliTest, TextReport) {
  ASSERT_EQ(synth("x", 300, 0.0, 0.0, 2).code, 0);
  const CliRun r = invoke({"register", "--source", file("x_s.ply"), "--target", file("x_d.ply"), "--method", "tricp",
                     "--report", "text"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind(text_table_header(), 0), 0u);
}

TEST_F(CliTest, RegisterCorrBothMethods) {
  ASSERT_EQ(synth("c", 1000, 0.0, 0.002, 4, true).code, 0);
  for (const std::string method : {"csdrsac", "ransac"}) {
    const CliRun r = invoke({"register-corr", "--source", file("c_s.ply"), "--target", file("c_d.ply"), "--correspondences",
                       file("c_c.txt"), "--method", method, "--epsilon", "0.01", "--truth", file("c_t.txt")});
    ASSERT_EQ(r.code, 0) << method << ": " << r.err;
    const RunReport rep = report_from_json(nlohmann::ordered_json::parse(r.out));
    EXPECT_EQ(rep.method, method);
    // ransac keeps its unrefined 3-point fit
    EXPECT_LT(*rep.rotation_error_deg, method == "ransac" ? 5.0 : 2.0) << method;
  }
}

TEST_F(CliTest, UsageErrors) {
  CliRun r = invoke({"register", "--source", "a.ply", "--target", "b.ply", "--bogus"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_TRUE(r.out.empty());

  r = invoke({});
  EXPECT_EQ(r.code, kExitUsage);
  r = invoke({"register", "--source", "a.ply"});
  EXPECT_EQ(r.code, kExitUsage);
  r = invoke({"register", "--source", "a.ply", "--target", "b.ply", "--method", "magic"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, ValidationErrors) {
  ASSERT_EQ(synth("v", 300, 0.0, 0.0, 2).code, 0);
  const CliRun r = invoke({"register", "--source", file("v_s.ply"), "--target", file("v_d.ply"), "--m", "20"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(CliTest, DataErrors) {
  CliRun r = invoke({"register", "--source", file("missing.ply"), "--target", file("missing.ply")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_NE(r.err.find("missing.ply"), std::string::npos);
  EXPECT_TRUE(r.out.empty());

  std::ofstream(file("bad.ply")) << "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n";
  r = invoke({"register", "--source", file("bad.ply"), "--target", file("bad.ply")});
  EXPECT_EQ(r.code, kExitData);
  EXPECT_TRUE(r.out.empty());

  std::ofstream(file("be.ply")) << "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
  r = invoke({"register", "--source", file("be.ply"), "--target", file("be.ply")});
  EXPECT_EQ(r.code, kExitData);

  ASSERT_EQ(synth("d", 100, 0.0, 0.0, 2).code, 0);
  std::ofstream(file("far.txt")) << "0 5000\n";
  r = invoke({"register-corr", "--source", file("d_s.ply"), "--target", file("d_d.ply"), "--correspondences",
           file("far.txt")});
  EXPECT_EQ(r.code, kExitData);
}

TEST_F(CliTest, HelpExitsCleanly) {
  const CliRun r = invoke({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("register"), std::string::npos);
}

TEST_F(CliTest, BenchSdrsacDominatesTricpAtHighOutlierRates) {
  const CliRun r = invoke({"bench", "--outlier-rates", "0.3,0.5", "--seeds", "3", "--methods", "sdrsac,tricp"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc.at("cells").size(), 2u * 3u * 2u);
  std::map<double, std::map<std::string, double>> median;
  for (const auto& s : doc.at("summary")) median[s["outlier_rate"]][s["method"]] = s["median_consensus"];
  ASSERT_EQ(median.size(), 2u);
  for (auto& [rate, m] : median) EXPECT_GT(m["sdrsac"], m["tricp"]) << "r = " << rate;
}
