#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "vprom/pipeline.hpp"

using namespace vprom;
using namespace vprom::pipeline;
namespace fs = std::filesystem;

namespace {

// One tiny campaign shared by the suite: designed, simulated and built once.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(oracle::scratch_dir("pipeline"));
    log_ = new std::ostringstream;
    campaign_ = new Campaign(oracle::tiny_config(), *root_, log_);
    campaign_->doe();
    ASSERT_EQ(campaign_->simulate("train"), 0u);
    ASSERT_EQ(campaign_->simulate("valid"), 0u);
    for (auto s : {Strategy::mac, Strategy::cprom, Strategy::vprom}) campaign_->build(s);
  }

  static void TearDownTestSuite() {
    delete campaign_;
    delete log_;
    delete root_;
  }

  static Campaign& c() { return *campaign_; }

  static fs::path* root_;
  static std::ostringstream* log_;
  static Campaign* campaign_;
};

fs::path* PipelineTest::root_ = nullptr;
std::ostringstream* PipelineTest::log_ = nullptr;
Campaign* PipelineTest::campaign_ = nullptr;

std::string slurp(const fs::path& p) { return io::read_file(p); }

}  // namespace

TEST(Strategy, NamesAndLabels) {
  EXPECT_EQ(strategy_from_string("vprom"), Strategy::vprom);
  EXPECT_THROW(strategy_from_string("pod"), ConfigError);
  EXPECT_EQ(strategy_label(Strategy::mac, false), "MACpROM");
  EXPECT_EQ(strategy_label(Strategy::cprom, true), "HP-CpROM");
  EXPECT_THROW(check_split("test"), ConfigError);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (std::size_t workers : {1u, 3u, 16u}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(Campaign, DirectoryIsKeyedByConfigHash) {
  const auto root = oracle::scratch_dir("keyed");
  std::ostringstream log;
  auto cfg = oracle::tiny_config();
  Campaign a(cfg, root, &log);
  cfg.tau *= 2;
  Campaign b(cfg, root, &log);
  EXPECT_NE(a.dir(), b.dir());
  EXPECT_EQ(a.dir().filename(), "run-" + a.hash());
  EXPECT_EQ(a.manifest().at("config_hash"), a.hash());
  EXPECT_FALSE(a.manifest().at("snapshot_ready").at("train").get<bool>());
}

TEST(Campaign, EqualSeedsAreRejected) {
  auto cfg = oracle::tiny_config();
  cfg.seed_valid = cfg.seed_train;
  std::ostringstream log;
  Campaign a(cfg, oracle::scratch_dir("seeds"), &log);
  EXPECT_THROW(a.doe(), ConfigError);
}

TEST(Campaign, StepsOutOfOrderAreConfigErrors) {
  std::ostringstream log;
  Campaign a(oracle::tiny_config(), oracle::scratch_dir("order"), &log);
  EXPECT_THROW(a.simulate("train"), ConfigError);
  a.doe();
  EXPECT_THROW(a.evaluate(Strategy::cprom, "valid"), ConfigError);
  EXPECT_THROW(a.report(), ConfigError);
}

TEST(Campaign, TamperedManifestIsRejected) {
  const auto root = oracle::scratch_dir("tamper");
  std::ostringstream log;
  fs::path dir;
  {
    Campaign a(oracle::tiny_config(), root, &log);
    dir = a.dir();
  }
  io::write_atomic(dir / "manifest.json", R"({"config_hash": "0000000000000000"})");
  EXPECT_THROW(Campaign(oracle::tiny_config(), root, &log), IoError);
}

TEST_F(PipelineTest, DoeIsIdempotent) {
  const auto before = slurp(c().dir() / "samples" / "train.json");
  EXPECT_FALSE(c().doe());
  EXPECT_EQ(slurp(c().dir() / "samples" / "train.json"), before);
  EXPECT_EQ(c().samples("train").size(), c().config().n_train);
  EXPECT_EQ(c().samples("valid").size(), c().config().n_valid);
}

TEST_F(PipelineTest, SimulateMarksSnapshotsReady) {
  EXPECT_TRUE(c().manifest().at("snapshot_ready").at("train").get<bool>());
  EXPECT_TRUE(c().manifest().at("snapshot_ready").at("valid").get<bool>());
}

TEST_F(PipelineTest, SimulateResumesOnlyMissingSamples) {
  const auto base = c().dir() / "fom" / "train";
  const auto u_before = slurp(base / "0002_u.vprm");
  const auto t0 = fs::last_write_time(base / "0001_u.vprm");
  fs::remove(base / "0002.json");
  EXPECT_EQ(c().simulate("train"), 0u);
  EXPECT_TRUE(c().fom_complete("train", 2));
  EXPECT_EQ(slurp(base / "0002_u.vprm"), u_before);
  EXPECT_EQ(fs::last_write_time(base / "0001_u.vprm"), t0);
  EXPECT_EQ(c().manifest().at("events").back().at("new"), 1);
}

TEST_F(PipelineTest, StoredSolutionMatchesDirectSimulation) {
  const auto s = c().samples("valid").at(1);
  const auto direct = c().benchmark().simulate(s);
  EXPECT_EQ(c().load_fom("valid", 1).u, direct.u);
}

TEST_F(PipelineTest, BuildWritesArtifacts) {
  const auto b = c().dir() / "build";
  EXPECT_TRUE(fs::exists(b / "common" / "v_global.vprm"));
  EXPECT_TRUE(fs::exists(b / "mac" / "library.json"));
  EXPECT_TRUE(fs::exists(b / "vprom" / "models.json"));
  EXPECT_EQ(io::load_matrix(b / "common" / "v_global.vprm").cols(), c().config().r_global);
}

TEST_F(PipelineTest, EveryStrategyEvaluates) {
  for (auto s : {Strategy::mac, Strategy::cprom, Strategy::vprom}) {
    const auto res = c().evaluate(s, "valid");
    ASSERT_EQ(res.records.size(), c().config().n_valid);
    for (const auto& r : res.records) {
      EXPECT_FALSE(r.failed) << to_string(s);
      EXPECT_TRUE(std::isfinite(r.err_u));
      EXPECT_LT(r.err_u, 100.0) << to_string(s);
    }
  }
}

TEST_F(PipelineTest, ReloadedModelsGiveIdenticalErrors) {
  const auto a = c().evaluate(Strategy::vprom, "valid").records;
  std::ostringstream log;
  Campaign fresh(c().config(), *root_, &log);
  const auto b = fresh.evaluate(Strategy::vprom, "valid").records;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].err_u, b[i].err_u);
}

TEST_F(PipelineTest, UncertaintyOnlyForVariational) {
  EvaluateOptions opt;
  opt.uq_draws = 2;
  EXPECT_THROW(c().evaluate(Strategy::mac, "valid", opt), ConfigError);
  EXPECT_THROW(c().evaluate(Strategy::cprom, "valid", opt), ConfigError);
  opt.uq_samples = 1;
  const auto res = c().evaluate(Strategy::vprom, "valid", opt);
  ASSERT_EQ(res.containment.size(), 1u);
  EXPECT_GE(res.containment[0], 0.0);
  EXPECT_LE(res.containment[0], 1.0);
  EXPECT_FALSE(fs::is_empty(c().dir() / "eval" / "uq"));
}

TEST_F(PipelineTest, HyperReductionSelectsSubset) {
  EvaluateOptions opt;
  opt.hyper = true;
  opt.limit = 1;
  for (auto s : {Strategy::mac, Strategy::cprom}) {
    const auto res = c().evaluate(s, "valid", opt);
    ASSERT_EQ(res.records.size(), 1u);
    ASSERT_EQ(res.ecsw_sizes.size(), 1u);
    EXPECT_GE(res.ecsw_sizes[0], 1u);
    EXPECT_LE(res.ecsw_sizes[0], c().benchmark().frame.links.size());
    EXPECT_EQ(res.records[0].strategy, strategy_label(s, true));
  }
}

TEST_F(PipelineTest, ReportCoversEachLabelOnce) {
  c().evaluate(Strategy::cprom, "valid");
  c().evaluate(Strategy::cprom, "valid");  // replaces, does not append
  c().evaluate(Strategy::cprom, "train");
  const auto summary = c().report();
  std::vector<std::string> labels;
  for (const auto& s : summary) labels.push_back(s.strategy);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), "CpROM"), 1);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), "CpROM@train"), 1);
  for (const auto& s : summary) {
    if (s.strategy == "CpROM") EXPECT_EQ(s.n_records, c().config().n_valid);
  }
  const auto r = c().dir() / "report";
  for (const char* f : {"summary.csv", "errors.csv", "boxplot.csv", "error_map.csv", "summary.json"}) {
    EXPECT_TRUE(fs::exists(r / f)) << f;
  }
  EXPECT_EQ(slurp(r / "error_map.csv").rfind("amp,f_but,err_u,color\n", 0), 0u);
  EXPECT_THROW(c().report("amp", "nope"), ConfigError);
}

TEST_F(PipelineTest, TrainingSetErrorsAreSmall) {
  // A training point reuses the basis of its own cluster centre.
  const auto res = c().evaluate(Strategy::mac, "train");
  for (const auto& r : res.records) EXPECT_LT(r.err_u, 20.0);
}
