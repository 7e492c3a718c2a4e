#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ampnet {

using Json = nlohmann::json;

/// One IR node: an id, a kind name ("linear", "phi", ...) and its
/// kind-specific configuration.
struct NodeSpec {
  std::string id;
  std::string kind;
  Json config = Json::object();
};

struct EdgeSpec {
  std::string from;
  std::string from_port = "out";
  std::string to;
  std::string to_port = "in";
};

/// An entry point where the controller pumps messages. Ports with `returns`
/// receive a backward message for every forward message pumped; label ports
/// do not.
struct ControllerPort {
  std::string name;
  std::string node;
  std::string port = "in";
  bool returns = true;
};

/// Declarative graph description as read from JSON:
///   {"nodes": [{"id", "kind", ...config}], "edges": [{"from": "a:out", "to": "b:in"}],
///    "controller": [{"name", "to": "node:port", "returns"}]}
struct GraphSpec {
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<ControllerPort> controller;

  static GraphSpec from_json(const Json& j);
  Json to_json() const;

  NodeSpec& node(const std::string& id);
  const NodeSpec& node(const std::string& id) const;

  void add_node(std::string id, std::string kind, Json config = Json::object());
  /// Endpoints as "node" or "node:port".
  void connect(const std::string& from, const std::string& to);
  void add_controller(std::string name, const std::string& to, bool returns = true);
};

}  // namespace ampnet
