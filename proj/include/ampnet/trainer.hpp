#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ampnet/config.hpp"
#include "ampnet/gradcheck.hpp"
#include "ampnet/graph.hpp"
#include "ampnet/runtime.hpp"

namespace ampnet {

/// A results file could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kMetricsHeader = "epoch,wall_s,train_loss,valid_acc,inst_per_s,mean_staleness";
inline constexpr const char* kSweepHeader =
    "max_active_keys,min_update_frequency,epochs_to_target,wall_to_target_s,inst_per_s,final_valid_acc,reached";

struct LoadedData {
  std::vector<Instance> train;
  std::vector<Instance> valid;
  /// Per training instance size (sequence length, node count); drives bucketing.
  std::vector<std::size_t> train_sizes;
};

/// Per-component seeds fanned out from the run seed.
std::uint64_t component_seed(std::uint64_t run_seed, const std::string& component);

GraphSpec model_spec(const RunConfig& cfg);
/// The model graph, replicated when the config asks for it.
IrGraph build_model_graph(const RunConfig& cfg);
LoadedData load_data(const RunConfig& cfg);

struct EpochRow {
  int epoch = 0;
  /// Cumulative training wall time.
  double wall_s = 0;
  double train_loss = 0;
  double valid_acc = 0;
  double inst_per_s = 0;
  double mean_staleness = 0;
};

struct TrainResult {
  std::vector<EpochRow> rows;
  /// -1 when the target was not reached (or no target was set).
  int epochs_to_target = -1;
  double wall_to_target_s = -1;
  /// Training instances per second over all epochs.
  double inst_per_s = 0;
  double final_valid_acc = 0;
  bool reached = false;
};

/// Trains for up to cfg.epochs, evaluating after each epoch and stopping
/// early at the target accuracy. With a non-empty `out_dir` writes
/// metrics.csv, weights.json, config.json and (if enabled) events.jsonl.
TrainResult train(const RunConfig& cfg, const std::string& out_dir);
/// Same, on already-built graph and data.
TrainResult train(const RunConfig& cfg, const IrGraph& graph, const LoadedData& data, const std::string& out_dir);

/// `repeat` runs with seeds seed, seed+1, ... into out_dir/run_<i>, plus
/// out_dir/summary.json with medians.
Json train_repeated(const RunConfig& cfg, const std::string& out_dir, int repeat);

struct SweepRow {
  int max_active_keys = 1;
  std::int64_t min_update_frequency = 1;
  TrainResult result;
};

/// One training run per (mak, muf) cell on the same data; writes
/// out_dir/sweep.csv when `out_dir` is set.
std::vector<SweepRow> sweep(const RunConfig& cfg, const std::vector<int>& maks, const std::vector<std::int64_t>& mufs,
                            const std::string& out_dir);

/// Gradient check on the first cfg.gradcheck_instances training instances.
GradcheckReport gradcheck(const RunConfig& cfg);
Json to_json(const GradcheckReport& r);

/// Reads a metrics or sweep CSV back, checking its header, and returns a
/// JSON summary (row count, final and best values).
Json summarize_csv(const std::string& path);

/// Writes one split ("train" or "valid") as JSON lines.
std::size_t export_dataset(const RunConfig& cfg, const std::string& split, const std::string& path);

/// Parameter tensors of every PPT as {node: {param: {shape, values}}}.
Json weights_json(Runtime& rt);

double median(std::vector<double> v);

}  // namespace ampnet
