// Command-line front end. Talks to the engine only through the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ampnet/ampnet.h"

namespace {

struct Overrides {
  std::optional<int64_t> threads, mak, muf, replicas, seed, epochs;
  std::optional<double> lr, target;
};

int report_error(ampnet_status s) {
  std::cerr << "error (" << ampnet_status_name(s) << "): " << ampnet_last_error() << "\n";
  return s == AMPNET_ERR_CONFIG || s == AMPNET_ERR_INVALID_ARGUMENT ? 2 : 1;
}

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--max-active-keys", o.mak, "Instances in flight")->check(CLI::PositiveNumber);
  cmd->add_option("--min-update-frequency", o.muf, "Gradients per update")->check(CLI::PositiveNumber);
  cmd->add_option("--replicas", o.replicas, "Copies of the replicated node")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Run seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", o.lr, "Learning rate");
  cmd->add_option("--target", o.target, "Target validation accuracy (0 disables early stop)");
}

ampnet_status load_config(const std::string& path, const Overrides& o, ampnet_config** cfg) {
  ampnet_status s = ampnet_config_load(path.c_str(), cfg);
  if (s != AMPNET_OK) return s;
  const std::pair<const char*, const std::optional<int64_t>*> ints[] = {
      {"threads", &o.threads}, {"max_active_keys", &o.mak}, {"min_update_frequency", &o.muf},
      {"replicas", &o.replicas}, {"seed", &o.seed}, {"epochs", &o.epochs}};
  for (const auto& [key, v] : ints)
    if (*v && (s = ampnet_config_set_int(*cfg, key, **v)) != AMPNET_OK) return s;
  if (o.lr && (s = ampnet_config_set_double(*cfg, "lr", *o.lr)) != AMPNET_OK) return s;
  if (o.target && (s = ampnet_config_set_double(*cfg, "target_accuracy", *o.target)) != AMPNET_OK) return s;
  return AMPNET_OK;
}

void print_and_free(char* s) {
  if (!s) return;
  std::cout << s << "\n";
  ampnet_string_free(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous model-parallel training of dynamic networks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ampnet_version());

  std::string config_path, out_dir;
  Overrides ov;
  int repeat = 1;

  auto* train = app.add_subcommand("train", "Train to the target accuracy, writing metrics.csv and weights.json");
  train->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--repeat", repeat, "Independent runs; a median summary is written")->check(CLI::PositiveNumber);
  add_overrides(train, ov);

  auto* gradcheck = app.add_subcommand("gradcheck", "Compare gradients against central finite differences");
  gradcheck->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  gradcheck->add_option("--out", out_dir, "Directory for gradcheck.json");
  add_overrides(gradcheck, ov);

  std::vector<int64_t> maks{1, 4, 8, 16}, mufs{10, 50, 250};
  auto* sweep = app.add_subcommand("sweep", "Grid over max_active_keys x min_update_frequency");
  sweep->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "Output directory for sweep.csv")->required();
  sweep->add_option("--mak", maks, "max_active_keys values")->delimiter(',');
  sweep->add_option("--muf", mufs, "min_update_frequency values")->delimiter(',');
  add_overrides(sweep, ov);

  ampnet_throughput_model tm{200, 30, 30, 4, 4, 1e12, 0.5, 32};
  auto* estimate = app.add_subcommand("estimate-throughput", "Analytic throughput and bandwidth of a graph network");
  estimate->add_option("--hidden", tm.hidden, "Hidden size H")->capture_default_str();
  estimate->add_option("--nodes", tm.nodes, "Mean nodes per graph N")->capture_default_str();
  estimate->add_option("--edges", tm.edges, "Mean edges per graph E")->capture_default_str();
  estimate->add_option("--edge-types", tm.edge_types, "Edge types C")->capture_default_str();
  estimate->add_option("--steps", tm.steps, "Propagation steps")->capture_default_str();
  estimate->add_option("--flops", tm.device_flops, "Device FLOPS")->capture_default_str();
  estimate->add_option("--overhead", tm.overhead, "Efficiency factor")->capture_default_str();
  estimate->add_option("--bits", tm.bits_per_scalar, "Bits per scalar")->capture_default_str();

  std::string csv_path;
  auto* summarize = app.add_subcommand("summarize", "Summarize a metrics.csv or sweep.csv");
  summarize->add_option("csv", csv_path, "CSV file")->required()->check(CLI::ExistingFile);

  std::string split = "train", data_out;
  auto* export_cmd = app.add_subcommand("export-dataset", "Write a dataset split as JSON lines");
  export_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--split", split, "train or valid")->check(CLI::IsMember({"train", "valid"}));
  export_cmd->add_option("--out", data_out, "Output file")->required();
  add_overrides(export_cmd, ov);

  std::string graph_path;
  auto* validate = app.add_subcommand("validate-graph", "Check a graph description");
  validate->add_option("graph", graph_path, "Graph JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  ampnet_config* cfg = nullptr;
  auto with_config = [&](auto&& body) -> int {
    ampnet_status s = load_config(config_path, ov, &cfg);
    if (s != AMPNET_OK) {
      ampnet_config_free(cfg);
      return report_error(s);
    }
    const int rc = body();
    ampnet_config_free(cfg);
    return rc;
  };

  if (*train) {
    return with_config([&] {
      char* summary = nullptr;
      const auto s = ampnet_train(cfg, out_dir.c_str(), repeat, &summary);
      if (s != AMPNET_OK) return report_error(s);
      print_and_free(summary);
      return 0;
    });
  }
  if (*gradcheck) {
    return with_config([&] {
      char* report = nullptr;
      int passed = 0;
      const auto s = ampnet_gradcheck(cfg, &passed, &report);
      if (s != AMPNET_OK) return report_error(s);
      if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        std::ofstream(std::filesystem::path(out_dir) / "gradcheck.json") << report << "\n";
      }
      print_and_free(report);
      std::cerr << (passed ? "gradcheck passed" : "gradcheck FAILED") << "\n";
      return passed ? 0 : 3;
    });
  }
  if (*sweep) {
    return with_config([&] {
      char* rows = nullptr;
      const auto s = ampnet_sweep(cfg, maks.data(), maks.size(), mufs.data(), mufs.size(), out_dir.c_str(), &rows);
      if (s != AMPNET_OK) return report_error(s);
      print_and_free(rows);
      return 0;
    });
  }
  if (*estimate) {
    ampnet_throughput_estimate e{};
    const auto s = ampnet_estimate_throughput(&tm, &e);
    if (s != AMPNET_OK) return report_error(s);
    std::printf("fwdop %.6g\nbwdop %.6g\nsamples_per_s %.2g\nbandwidth_bits_per_s %.2g\n", e.fwdop, e.bwdop,
                e.samples_per_s, e.bandwidth_bits_per_s);
    return 0;
  }
  if (*summarize) {
    char* json = nullptr;
    const auto s = ampnet_summarize(csv_path.c_str(), &json);
    if (s != AMPNET_OK) return report_error(s);
    print_and_free(json);
    return 0;
  }
  if (*export_cmd) {
    return with_config([&] {
      size_t n = 0;
      const auto s = ampnet_export_dataset(cfg, split.c_str(), data_out.c_str(), &n);
      if (s != AMPNET_OK) return report_error(s);
      std::cout << "wrote " << n << " instances to " << data_out << "\n";
      return 0;
    });
  }
  if (*validate) {
    std::ifstream in(graph_path);
    std::stringstream ss;
    ss << in.rdbuf();
    char* errors = nullptr;
    const auto s = ampnet_graph_validate(ss.str().c_str(), &errors);
    if (s != AMPNET_OK) {
      std::cerr << (errors ? errors : ampnet_last_error()) << "\n";
      ampnet_string_free(errors);
      return 1;
    }
    std::cout << "graph is valid\n";
    return 0;
  }
  return 0;
}
