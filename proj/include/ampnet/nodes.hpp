#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ampnet/graph_spec.hpp"
#include "ampnet/optim.hpp"
#include "ampnet/state.hpp"

namespace ampnet {

struct LossRecord {
  std::int64_t instance_id = 0;
  double loss = 0.0;
  bool correct = false;
  bool inference = false;
};

/// Sink for everything a node produces while handling one message. Forward
/// messages leave on output ports; backward messages leave on input ports.
class Emitter {
 public:
  virtual ~Emitter() = default;
  virtual void forward(std::size_t out_port, Message msg) = 0;
  virtual void backward(std::size_t in_port, Message msg) = 0;
  virtual void report(const LossRecord& record) = 0;
};

/// Emitter that buffers its outputs; used by the workers and by tests.
class CollectingEmitter final : public Emitter {
 public:
  struct Emitted {
    Direction direction;
    std::size_t port;
    Message msg;
  };

  void forward(std::size_t out_port, Message msg) override {
    out.push_back({Direction::kForward, out_port, std::move(msg)});
  }
  void backward(std::size_t in_port, Message msg) override {
    out.push_back({Direction::kBackward, in_port, std::move(msg)});
  }
  void report(const LossRecord& record) override { reports.push_back(record); }
  void clear() {
    out.clear();
    reports.clear();
  }

  std::vector<Emitted> out;
  std::vector<LossRecord> reports;
};

/// Construction context shared by every node of a runtime.
struct NodeContext {
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  std::int64_t min_update_frequency = 1;
};

/// An IR node. A node instance is owned by one worker and handles one message
/// at a time; all caches are private to it.
class Node {
 public:
  Node(std::string id, std::string kind, std::vector<std::string> inputs, std::vector<std::string> outputs)
      : id_(std::move(id)), kind_(std::move(kind)), inputs_(std::move(inputs)), outputs_(std::move(outputs)) {}
  virtual ~Node() = default;
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  const std::string& id() const noexcept { return id_; }
  const std::string& kind() const noexcept { return kind_; }
  const std::vector<std::string>& inputs() const noexcept { return inputs_; }
  const std::vector<std::string>& outputs() const noexcept { return outputs_; }

  /// Handles a forward message arriving on input port `in_port`.
  virtual void forward(std::size_t in_port, Message msg, Emitter& out) = 0;
  /// Handles a backward message arriving on output port `out_port`.
  virtual void backward(std::size_t out_port, Message msg, Emitter& out) = 0;

  /// Keys of every live cache entry, tagged with the cache name. Empty at a
  /// clean epoch boundary.
  virtual std::vector<std::string> cached_keys() const { return {}; }
  virtual void clear_caches() {}

  /// Non-null for parameterized payload transforms.
  virtual ParamBlock* params() { return nullptr; }
  const ParamBlock* params() const { return const_cast<Node*>(this)->params(); }
  virtual const StalenessHistogram* staleness() const { return nullptr; }
  virtual void reset_staleness() {}
  /// Applies any partial accumulator (PPTs only).
  virtual void flush_updates() {}

 private:
  std::string id_;
  std::string kind_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

/// Builds a node from its declarative spec. Throws std::invalid_argument for
/// unknown kinds or malformed configuration.
std::unique_ptr<Node> make_node(const NodeSpec& spec, const NodeContext& ctx);

/// Kinds whose nodes own a ParamBlock.
bool is_parameterized_kind(const std::string& kind);

/// Per-node seed derived from the run seed and the node's init key (the
/// node id unless the spec overrides it, e.g. for replicas).
std::uint64_t node_seed(std::uint64_t run_seed, const NodeSpec& spec);

}  // namespace ampnet
