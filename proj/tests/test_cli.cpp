#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "confot_cli.hpp"

using namespace confot;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("confot_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "confot");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  int synth(const std::string& prefix, const std::string& shift = "prior") {
    return run({"gen-synth", "--classes", "5", "--cal", "100", "--test", "100", "--shift", shift, "--seed", "3",
                "--out-prefix", path(prefix)});
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(Cli, GenSynthThenValidate) {
  ASSERT_EQ(synth("d"), cli::kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(path("d.cal.logits.bin")));
  EXPECT_TRUE(fs::exists(path("d.test.labels.csv")));
  EXPECT_EQ(run({"validate", "--logits", path("d.logits.bin"), "--labels", path("d.labels.csv")}), cli::kExitOk);
  EXPECT_NE(out_.str().find("200 samples"), std::string::npos) << out_.str();
}

TEST_F(Cli, RunWritesJsonAndCsv) {
  ASSERT_EQ(synth("d"), cli::kExitOk);
  ASSERT_EQ(run({"run", "--logits", path("d.logits.bin"), "--labels", path("d.labels.csv"), "--seeds", "3",
                 "--score", "lac", "--score", "aps", "--alpha", "0.1", "--out", path("r.json")}),
            cli::kExitOk)
      << err_.str();
  const auto report = read_report_json(path("r.json"));
  EXPECT_EQ(report.status, "complete");
  EXPECT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.paired.size(), 2u);
  EXPECT_NE(out_.str().find("paired lac"), std::string::npos) << out_.str();

  ASSERT_EQ(run({"run", "--logits", path("d.logits.bin"), "--labels", path("d.labels.csv"), "--seeds", "2",
                 "--method", "conf-ot", "--batch-size", "16", "--out", path("r.csv")}),
            cli::kExitOk)
      << err_.str();
  const auto rows = read_report_csv(path("r.csv"));
  EXPECT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_EQ(r.method, "conf_ot");
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  ASSERT_EQ(synth("d"), cli::kExitOk);
  const std::vector<std::string> base{"run", "--logits", path("d.logits.bin"), "--labels", path("d.labels.csv")};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  EXPECT_EQ(with({"--alpha", "1.5"}), cli::kExitConfig);
  EXPECT_EQ(with({"--alpha", "0"}), cli::kExitConfig);
  EXPECT_EQ(with({"--tau", "-1"}), cli::kExitConfig);
  EXPECT_EQ(with({"--cal-ratio", "1"}), cli::kExitConfig);
  EXPECT_EQ(with({"--score", "bogus"}), cli::kExitConfig);
  EXPECT_EQ(with({"--no-such-flag"}), cli::kExitConfig);
  EXPECT_EQ(run({"frobnicate"}), cli::kExitConfig);
  EXPECT_EQ(run({}), cli::kExitConfig);
}

TEST_F(Cli, DataErrorsExitWithThree) {
  ASSERT_EQ(synth("d"), cli::kExitOk);
  EXPECT_EQ(run({"validate", "--logits", path("missing.bin"), "--labels", path("d.labels.csv")}), cli::kExitData);
  {
    std::ofstream bad(path("bad.bin"), std::ios::binary);
    bad << "NOTALOGITFILE_AT_ALL_0123456789";
  }
  EXPECT_EQ(run({"validate", "--logits", path("bad.bin"), "--labels", path("d.labels.csv")}), cli::kExitData);
  EXPECT_NE(err_.str().find("offset"), std::string::npos) << err_.str();
  EXPECT_EQ(run({"run", "--logits", path("d.cal.logits.bin"), "--labels", path("d.labels.csv"), "--seeds", "1"}),
            cli::kExitData);
}

TEST_F(Cli, HelpExitsZero) {
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
  EXPECT_NE(out_.str().find("gen-synth"), std::string::npos);
}
