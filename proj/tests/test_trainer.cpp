#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ampnet/trainer.hpp"

using namespace ampnet;
namespace fs = std::filesystem;

namespace {

RunConfig small_ggsnn() {
  return RunConfig::from_json(Json::parse(R"({
    "epochs": 3,
    "target_accuracy": 0.0,
    "model": {"type": "ggsnn", "hidden": 5, "steps": 2},
    "dataset": {"type": "babi15", "train": 60, "valid": 20, "num_nodes": 8},
    "train": {"threads": 2, "max_active_keys": 2, "min_update_frequency": 5, "optimizer": {"kind": "adam", "lr": 0.01}}
  })"));
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

TEST(Trainer, MetricsCsvAndArtifacts) {
  const auto dir = fresh_dir("ampnet_trainer_run");
  auto cfg = small_ggsnn();
  cfg.event_log = true;
  const auto r = train(cfg, dir.string());
  ASSERT_EQ(r.rows.size(), 3u);
  const auto lines = lines_of(dir / "metrics.csv");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], kMetricsHeader);
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(lines[i].rfind(std::to_string(i) + ",", 0), 0u) << lines[i];
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_GT(r.rows[i].wall_s, r.rows[i - 1].wall_s);

  std::ifstream wj(dir / "weights.json");
  const Json weights = Json::parse(wj);
  EXPECT_TRUE(weights.contains("gru"));
  std::ifstream cj(dir / "config.json");
  EXPECT_EQ(RunConfig::from_json(Json::parse(cj)).to_json(), cfg.to_json());
  EXPECT_GT(lines_of(dir / "events.jsonl").size(), 0u);

  const auto s = summarize_csv((dir / "metrics.csv").string());
  EXPECT_EQ(s.at("kind"), "metrics");
  EXPECT_EQ(s.at("rows"), 3);
  EXPECT_DOUBLE_EQ(s.at("final").at("valid_acc").get<double>(), r.rows.back().valid_acc);
  fs::remove_all(dir);
}

TEST(Trainer, EarlyStopAtTarget) {
  auto cfg = small_ggsnn();
  cfg.epochs = 50;
  cfg.target_accuracy = 0.3;
  const auto r = train(cfg, "");
  ASSERT_TRUE(r.reached);
  EXPECT_EQ(static_cast<std::size_t>(r.epochs_to_target), r.rows.size());
  EXPECT_GE(r.rows.back().valid_acc, 0.3);
  for (std::size_t i = 0; i + 1 < r.rows.size(); ++i) EXPECT_LT(r.rows[i].valid_acc, 0.3);
}

TEST(Trainer, SameSeedSameResultOnOneWorker) {
  auto cfg = small_ggsnn();
  cfg.train.threads = 1;
  cfg.train.max_active_keys = 1;
  cfg.epochs = 2;
  const auto a = train(cfg, ""), b = train(cfg, "");
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].train_loss, b.rows[i].train_loss);
    EXPECT_EQ(a.rows[i].valid_acc, b.rows[i].valid_acc);
  }
}

// With two workers the per-node branches of one graph finish in varying
// order, so gradient sums round differently.
TEST(Trainer, OneKeyOnTwoWorkersAgreesToRounding) {
  auto cfg = small_ggsnn();
  cfg.train.max_active_keys = 1;
  cfg.epochs = 2;
  const auto a = train(cfg, ""), b = train(cfg, "");
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    EXPECT_NEAR(a.rows[i].train_loss, b.rows[i].train_loss, 1e-9 * std::abs(a.rows[i].train_loss));
}

TEST(Trainer, RepeatWritesMedianSummary) {
  const auto dir = fresh_dir("ampnet_trainer_repeat");
  auto cfg = small_ggsnn();
  cfg.epochs = 1;
  const auto s = train_repeated(cfg, dir.string(), 3);
  EXPECT_EQ(s.at("repeat"), 3);
  ASSERT_EQ(s.at("runs").size(), 3u);
  std::vector<double> accs;
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(s.at("runs")[static_cast<std::size_t>(i)].at("seed"), cfg.seed + static_cast<std::uint64_t>(i));
    EXPECT_TRUE(fs::exists(dir / ("run_" + std::to_string(i)) / "metrics.csv"));
    accs.push_back(s.at("runs")[static_cast<std::size_t>(i)].at("final_valid_acc"));
  }
  std::sort(accs.begin(), accs.end());
  EXPECT_DOUBLE_EQ(s.at("median_final_valid_acc").get<double>(), accs[1]);
  EXPECT_TRUE(s.at("median_epochs_to_target").is_null());
  EXPECT_TRUE(fs::exists(dir / "summary.json"));
  EXPECT_THROW(train_repeated(cfg, "", 0), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Trainer, Median) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_DOUBLE_EQ(median({}), 0);
}

TEST(Sweep, OneRowPerCell) {
  const auto dir = fresh_dir("ampnet_trainer_sweep");
  auto cfg = small_ggsnn();
  cfg.epochs = 1;
  cfg.dataset.train = 20;
  cfg.dataset.valid = 10;
  const std::vector<int> maks{1, 2, 4, 8};
  const std::vector<std::int64_t> mufs{1, 5, 50};
  const auto rows = sweep(cfg, maks, mufs, dir.string());
  ASSERT_EQ(rows.size(), 12u);
  const auto lines = lines_of(dir / "sweep.csv");
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], kSweepHeader);
  std::size_t k = 0;
  for (int mak : maks)
    for (auto muf : mufs) {
      EXPECT_EQ(rows[k].max_active_keys, mak);
      EXPECT_EQ(rows[k].min_update_frequency, muf);
      std::ostringstream prefix;
      prefix << mak << ',' << muf << ',';
      EXPECT_EQ(lines[k + 1].rfind(prefix.str(), 0), 0u) << lines[k + 1];
      ++k;
    }
  const auto s = summarize_csv((dir / "sweep.csv").string());
  EXPECT_EQ(s.at("kind"), "sweep");
  EXPECT_EQ(s.at("rows"), 12);
  EXPECT_THROW(sweep(cfg, {}, mufs, ""), std::invalid_argument);
  EXPECT_THROW(sweep(cfg, {0}, mufs, ""), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Summarize, RejectsMalformedCsv) {
  const auto p = fs::temp_directory_path() / "ampnet_bad.csv";
  auto error_of = [&](const std::string& body) {
    std::ofstream(p) << body;
    try {
      summarize_csv(p.string());
    } catch (const IoError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(error_of("a,b\n1,2\n").find("unrecognized header"), std::string::npos);
  EXPECT_NE(error_of(std::string(kMetricsHeader) + "\n1,2,3\n").find(":2: expected 6 fields"), std::string::npos);
  EXPECT_NE(error_of(std::string(kMetricsHeader) + "\n1,2,3,x,5,6\n").find("'x' is not a number"), std::string::npos);
  EXPECT_NE(error_of("").find("empty file"), std::string::npos);
  fs::remove(p);
  EXPECT_THROW(summarize_csv(p.string()), IoError);

  std::ofstream(p) << kSweepHeader << "\n1,1,-1,-1,10,0.5,0\n4,1,3,2.5,30,0.99,1\n2,1,3,2.0,20,0.99,1\n";
  const auto s = summarize_csv(p.string());
  EXPECT_EQ(s.at("reached"), 2);
  EXPECT_EQ(s.at("fastest").at("max_active_keys"), 2);
  fs::remove(p);
}

TEST(ExportDataset, JsonLinesPerInstance) {
  const auto p = fs::temp_directory_path() / "ampnet_export.jsonl";
  auto cfg = small_ggsnn();
  EXPECT_EQ(export_dataset(cfg, "valid", p.string()), 20u);
  const auto lines = lines_of(p);
  ASSERT_EQ(lines.size(), 20u);
  for (const auto& l : lines) EXPECT_NO_THROW(Json::parse(l));
  EXPECT_THROW(export_dataset(cfg, "test", p.string()), std::invalid_argument);
  fs::remove(p);
}

TEST(Seeds, ComponentSeedsDiffer) {
  EXPECT_NE(component_seed(1, "train"), component_seed(1, "valid"));
  EXPECT_NE(component_seed(1, "train"), component_seed(2, "train"));
  EXPECT_EQ(component_seed(7, "order"), component_seed(7, "order"));
}
