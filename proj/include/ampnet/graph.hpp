#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ampnet/graph_spec.hpp"
#include "ampnet/nodes.hpp"

namespace ampnet {

/// Raised by IrGraph::build with every problem found, not just the first.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const noexcept { return errors_; }

 private:
  std::vector<std::string> errors_;
};

/// A message destination. `node == kController` addresses the controller, in
/// which case `port` is the controller port index.
struct Endpoint {
  static constexpr int kController = -1;
  int node = kController;
  std::size_t port = 0;

  bool is_controller() const noexcept { return node == kController; }
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// PPT copies that share one logical parameter set and are averaged at the
/// end of every epoch.
struct ReplicaGroup {
  std::string logical;
  std::vector<std::string> members;
};

/// Validated, immutable IR graph with resolved port routing.
class IrGraph {
 public:
  /// Validates `spec` and resolves its routing tables. Throws ValidationError.
  static IrGraph build(GraphSpec spec, std::vector<ReplicaGroup> replicas = {});

  const GraphSpec& spec() const noexcept { return spec_; }
  std::size_t node_count() const noexcept { return spec_.nodes.size(); }
  const NodeSpec& node_spec(std::size_t i) const { return spec_.nodes[i]; }
  int index_of(const std::string& id) const;
  const std::vector<std::string>& inputs(std::size_t i) const { return inputs_[i]; }
  const std::vector<std::string>& outputs(std::size_t i) const { return outputs_[i]; }
  std::size_t input_port(std::size_t node, const std::string& port) const;
  std::size_t output_port(std::size_t node, const std::string& port) const;

  /// Destination of a forward message leaving `node` on output `out_port`.
  Endpoint forward_target(std::size_t node, std::size_t out_port) const { return fwd_[node][out_port]; }
  /// Destination of a backward message leaving `node` on input `in_port`.
  Endpoint backward_target(std::size_t node, std::size_t in_port) const { return bwd_[node][in_port]; }

  std::size_t controller_port_count() const noexcept { return spec_.controller.size(); }
  const ControllerPort& controller_port(std::size_t i) const { return spec_.controller[i]; }
  std::size_t controller_port_index(const std::string& name) const;
  /// Node input addressed by controller port `i`.
  Endpoint controller_target(std::size_t i) const { return entry_[i]; }

  /// Forward order with loop back-edges into Phi nodes removed.
  const std::vector<std::size_t>& topological_order() const noexcept { return topo_; }
  std::vector<std::string> topological_ids() const;

  /// Hash of the canonical structure (nodes, configs, edges, controller).
  std::uint64_t structure_hash() const;

  const std::vector<ReplicaGroup>& replica_groups() const noexcept { return replicas_; }

  /// Fresh node objects for one runtime, in node index order.
  std::vector<std::unique_ptr<Node>> instantiate(const NodeContext& ctx) const;

 private:
  GraphSpec spec_;
  std::vector<std::vector<std::string>> inputs_;
  std::vector<std::vector<std::string>> outputs_;
  std::vector<std::vector<Endpoint>> fwd_;
  std::vector<std::vector<Endpoint>> bwd_;
  std::vector<Endpoint> entry_;
  std::vector<std::size_t> topo_;
  std::vector<ReplicaGroup> replicas_;
};

/// Replaces PPT `node_id` with a key-mod Cond, `k` replicas sharing the
/// original initialization, and a Phi join. Registers a ReplicaGroup.
IrGraph build_replicated(const IrGraph& graph, const std::string& node_id, int k);

}  // namespace ampnet
