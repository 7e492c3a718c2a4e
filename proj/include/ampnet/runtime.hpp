#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ampnet/graph.hpp"
#include "ampnet/nodes.hpp"

namespace ampnet {

/// A worker raised while handling a message, or the run stalled. The message
/// names the node (or lists the stuck cache keys).
class ExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DeadlockError : public ExecutionError {
 public:
  using ExecutionError::ExecutionError;
};

/// One message pumped by the controller. The controller assigns the
/// instance id; `state` carries the remaining fields.
struct PumpItem {
  std::string port;
  Tensor payload;
  State state;
};

/// A training instance: its pump items, shared aux structure, and how many
/// loss evaluations it produces.
struct Instance {
  std::vector<PumpItem> items;
  AuxPtr aux;
  std::size_t expected_losses = 1;
};

struct TrainConfig {
  int threads = 1;
  int max_active_keys = 1;
  std::int64_t min_update_frequency = 1;
  /// Per-node overrides keyed by node id.
  std::map<std::string, std::int64_t> muf_overrides;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  /// Node id -> worker index. Unlisted nodes use the default heuristic.
  std::map<std::string, int> placement;
  /// Records per-port state multisets for the restoration check.
  bool diagnostics = false;
  /// Line-delimited JSON event log; empty disables it.
  std::string event_log;
  /// No controller event for this long with instances in flight counts as a stall.
  double stall_timeout_s = 60.0;
};

struct EpochReport {
  std::size_t instances = 0;
  std::size_t loss_records = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
  double wall_s = 0.0;
  double inst_per_s = 0.0;
  double mean_staleness = 0.0;
  std::map<std::string, StalenessHistogram> staleness;
  std::int64_t updates = 0;
  std::int64_t nonfinite_skipped = 0;
  std::uint64_t messages_enqueued = 0;
  std::uint64_t messages_dequeued = 0;
  int max_active_observed = 0;
};

/// Forward-emitted vs backward-received state multisets on one edge.
struct PortBalance {
  std::string node;
  std::string port;
  std::int64_t forward = 0;
  std::int64_t backward = 0;
  bool balanced = true;
};

struct RunOptions {
  bool inference = false;
  /// Apply partial accumulators and average replicas at the end.
  bool finalize = true;
};

/// Worker threads hosting the nodes of one graph plus the controller loop,
/// which runs on the calling thread.
class Runtime {
 public:
  Runtime(const IrGraph& graph, TrainConfig config);
  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  /// Processes every instance once; returns when the runtime is quiescent.
  EpochReport run(const std::vector<Instance>& data, const RunOptions& options = {});
  EpochReport train_epoch(const std::vector<Instance>& data) { return run(data, {}); }
  EpochReport evaluate(const std::vector<Instance>& data) { return run(data, {true, false}); }

  /// Poison, join and close all workers. Idempotent.
  void shutdown();

  const IrGraph& graph() const noexcept { return graph_; }
  const TrainConfig& config() const noexcept { return config_; }
  int worker_of(const std::string& node_id) const;
  const std::vector<int>& placement() const noexcept { return placement_; }

  // The accessors below are valid only while the runtime is quiescent
  // (between runs).
  Node& node(const std::string& id);
  std::vector<std::string> live_cache_keys() const;
  void flush_updates();
  void replica_sync();
  void set_min_update_frequency(std::int64_t muf);
  /// Per-port restoration balances from the last diagnostic run, including
  /// the controller's returning ports.
  std::vector<PortBalance> port_balances() const;
  void reset_diagnostics();

 private:
  struct Envelope {
    int node = 0;
    std::size_t port = 0;
    Message msg;
  };

  struct Worker;
  struct ControllerEvent;
  struct ControllerInbox;

  void worker_loop(Worker& w);
  void dispatch(int from_worker, Envelope env);
  void handle(Worker& w, Envelope& env);
  void send_to_controller(ControllerEvent ev);
  void abort_run();
  void compute_placement();

  IrGraph graph_;
  TrainConfig config_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<int> placement_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::unique_ptr<ControllerInbox> controller_;
  std::atomic<std::int64_t> in_flight_{0};
  std::atomic<std::uint64_t> enqueued_{0};
  std::atomic<std::uint64_t> dequeued_{0};
  std::atomic<bool> discard_{false};
  std::int64_t next_instance_id_ = 1;
  bool shut_down_ = false;
  std::chrono::steady_clock::time_point start_;

  // controller-side restoration multisets
  std::map<std::size_t, std::map<State, std::int64_t>> pumped_states_;
  std::map<std::size_t, std::map<State, std::int64_t>> returned_states_;
};

/// Default placement: each PPT on its own worker round-robin in topological
/// order; every other node joins the worker of its first placed predecessor.
std::vector<int> default_placement(const IrGraph& graph, int threads);

}  // namespace ampnet
