#include "bartspl/cli.hpp"
#include "bartspl/io.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bartspl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "bartspl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("bartspl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  /// Two overlapping groups with tails of unmatched units on both sides.
  fs::path write_data() {
    const auto p = dir_ / "data.csv";
    std::ofstream f(p);
    f << "y,e,x1,x2\n";
    for (int i = 0; i < 400; ++i) {
      const bool e = i % 2 == 0;
      const int k = i / 2;
      const double x1 = e ? 0.4 + k * 0.006 : k * 0.005;
      const double x2 = ((i * 37) % 17) / 17.0;
      f << format_double(x1 + 0.5 * x2 + (e ? 1.0 : 0.0)) << ',' << e << ',' << format_double(x1) << ','
        << format_double(x2) << '\n';
    }
    return p;
  }

  /// Interleaved groups on a supplied score.
  fs::path write_interleaved() {
    const auto p = dir_ / "mixed.csv";
    std::ofstream f(p);
    f << "y,e,x1,ps\n";
    for (int i = 0; i < 400; ++i) {
      const double ps = 0.2 + 0.6 * i / 399.0;
      f << format_double(ps) << ',' << (i % 2) << ',' << format_double(ps) << ',' << format_double(ps) << '\n';
    }
    return p;
  }

  fs::path dir_;
};

const std::vector<std::string> kQuick{"--trees", "20", "--burnin", "20", "--draws", "60", "--bootstrap-b", "50"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_F(CliTest, AnalyzeWritesResultFiles) {
  const auto data = write_data();
  const auto out = dir_ / "out";
  const auto r = cli(with({"analyze", "--input", data.string(), "--output-dir", out.string(), "--method",
                           "bartspl,trimmed-bart", "--seed", "7", "--ps-model", "logistic"},
                          kQuick));
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream res(slurp(out / "results.csv"));
  std::string line;
  std::getline(res, line);
  EXPECT_EQ(line, "estimand,method,point,ci_lower,ci_upper");
  int rows = 0, bartspl = 0, trimmed = 0;
  while (std::getline(res, line)) {
    ++rows;
    bartspl += line.find(",bartspl,") != std::string::npos;
    trimmed += line.find(",trimmed-bart,") != std::string::npos;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(bartspl, 2);
  EXPECT_EQ(trimmed, 2);

  const auto j = nlohmann::json::parse(slurp(out / "overlap.json"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"a", "b", "intervals", "pi", "tails"}));
  EXPECT_TRUE(j["tails"].contains("left"));
  EXPECT_TRUE(j["tails"].contains("right"));

  std::istringstream hist(slurp(out / "ps_histogram.csv"));
  int bins = -1;
  while (std::getline(hist, line)) ++bins;
  EXPECT_EQ(bins, 30);
  EXPECT_TRUE(fs::exists(out / "unit_effects.csv"));
}

TEST_F(CliTest, AnalyzeIsByteIdenticalUnderSeed) {
  const auto data = write_data();
  for (const char* d : {"a", "b"}) {
    const auto r = cli(with({"analyze", "--input", data.string(), "--output-dir", (dir_ / d).string(), "--method",
                             "bartspl,untrimmed-bart", "--seed", "3"},
                            kQuick));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"results.csv", "overlap.json", "ps_histogram.csv", "unit_effects.csv"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
}

TEST_F(CliTest, MissingExposureColumnIsExitTwo) {
  const auto p = dir_ / "bad.csv";
  std::ofstream(p) << "y,x\n1,2\n3,4\n";
  const auto r = cli({"analyze", "--input", p.string(), "--output-dir", (dir_ / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("'e'"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli({"simulate", "--family", "S31A", "--reps", "0"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--family", "S99", "--reps", "1"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"analyze", "--input", "x.csv", "--knots", "9"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  const auto data = write_data();
  const auto cfg = dir_ / "run.cfg";
  std::ofstream(cfg) << "# quick settings\ntrees = 20\nburnin = 20\ndraws = 60\nbootstrap-b = 50\n"
                        "method = bartspl,untrimmed-bart\nseed = 99\n";
  const auto a = cli({"analyze", "--input", data.string(), "--output-dir", (dir_ / "a").string(), "--config",
                      cfg.string(), "--seed", "4"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = cli(with({"analyze", "--input", data.string(), "--output-dir", (dir_ / "b").string(), "--method",
                           "bartspl,untrimmed-bart", "--seed", "4"},
                          kQuick));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(dir_ / "a" / "results.csv"), slurp(dir_ / "b" / "results.csv"));
  std::ofstream(dir_ / "bad.cfg") << "nonsense line\n";
  EXPECT_EQ(cli({"overlap", "--input", data.string(), "--config", (dir_ / "bad.cfg").string()}).code, 2);
}

TEST_F(CliTest, OverlapCompleteOverlapHasNoIntervalsOutside) {
  const auto data = write_interleaved();
  const auto r = cli({"overlap", "--input", data.string(), "--output-dir", (dir_ / "o").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir_ / "o" / "overlap.json"));
  EXPECT_EQ(j["pi"].get<double>(), 0.0);
  EXPECT_TRUE(j["tails"]["left"].is_null());
  EXPECT_TRUE(j["tails"]["right"].is_null());
}

TEST_F(CliTest, OverlapSensitivityTable) {
  const auto data = write_data();
  const auto r = cli({"overlap", "--input", data.string(), "--output-dir", (dir_ / "o").string(), "--ps-model",
                      "logistic", "--a-frac", "0.05", "--b", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream s(slurp(dir_ / "o" / "sensitivity.csv"));
  std::string line;
  std::getline(s, line);
  EXPECT_EQ(line, "a_fraction,b,a,pi,rn_units,intervals");
  std::vector<double> pis;
  while (std::getline(s, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    pis.push_back(std::stod(cells[3]));
  }
  ASSERT_EQ(pis.size(), 3u);
  EXPECT_NE(pis.front(), pis.back());
  const auto j = nlohmann::json::parse(slurp(dir_ / "o" / "overlap.json"));
  EXPECT_FALSE(j["tails"]["right"].is_null());
  EXPECT_GT(j["pi"].get<double>(), 0.0);
}

TEST_F(CliTest, SimulateWritesMetricsAndIsDeterministic) {
  for (const char* d : {"a", "b"}) {
    const auto r = cli(with({"simulate", "--family", "S31A", "--c", "0.35", "--reps", "2", "--method",
                             "bartspl,untrimmed-bart", "--seed", "11", "--oracle-draws", "10000", "--output-dir",
                             (dir_ / d).string()},
                            kQuick));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"metrics.csv", "replicates.csv", "study.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const auto m = slurp(dir_ / "a" / "metrics.csv");
  EXPECT_EQ(m.substr(0, m.find('\n')), "method,abs_bias,pct_bias,coverage,mse");
}

TEST(Histogram, BinsCoverEveryUnit) {
  std::vector<double> s;
  std::vector<std::uint8_t> e;
  for (int i = 0; i < 100; ++i) {
    s.push_back(0.01 * i);
    e.push_back(i % 3 == 0);
  }
  const auto h = score_histogram(s, e);
  ASSERT_EQ(h.size(), 30u);
  std::size_t exposed = 0, total = 0;
  for (const auto& b : h) {
    exposed += b.exposed;
    total += b.exposed + b.unexposed;
  }
  EXPECT_EQ(total, 100u);
  EXPECT_EQ(exposed, 34u);
  EXPECT_DOUBLE_EQ(h.front().lo, 0.0);
  EXPECT_DOUBLE_EQ(h.back().hi, 0.99);
}
