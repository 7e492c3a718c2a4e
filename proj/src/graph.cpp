#include "ampnet/graph.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace ampnet {

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::ostringstream os;
  os << "graph validation failed (" << errors.size() << " error" << (errors.size() == 1 ? "" : "s") << ")";
  for (const auto& e : errors) os << "\n  - " << e;
  return os.str();
}

// True when the graph restricted to nodes with keep[i] has a cycle. Reports
// the nodes of one such cycle in `cycle`.
bool find_cycle(const std::vector<std::vector<std::size_t>>& succ, const std::vector<bool>& keep,
                std::vector<std::size_t>& cycle) {
  const auto n = succ.size();
  std::vector<int> color(n, 0);
  std::vector<std::size_t> parent(n, n);
  for (std::size_t root = 0; root < n; ++root) {
    if (!keep[root] || color[root] != 0) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    color[root] = 1;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      if (i < succ[v].size()) {
        const auto w = succ[v][i++];
        if (!keep[w]) continue;
        if (color[w] == 1) {
          cycle.clear();
          for (auto u = v; u != w; u = parent[u]) cycle.push_back(u);
          cycle.push_back(w);
          std::reverse(cycle.begin(), cycle.end());
          return true;
        }
        if (color[w] == 0) {
          color[w] = 1;
          parent[w] = v;
          stack.emplace_back(w, 0);
        }
      } else {
        color[v] = 2;
        stack.pop_back();
      }
    }
  }
  return false;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> errors)
    : std::invalid_argument(join_errors(errors)), errors_(std::move(errors)) {}

IrGraph IrGraph::build(GraphSpec spec, std::vector<ReplicaGroup> replicas) {
  IrGraph g;
  std::vector<std::string> errors;
  const auto n = spec.nodes.size();

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(spec.nodes[i].id, i).second) errors.push_back("duplicate node id '" + spec.nodes[i].id + "'");
  }

  // Construct every node once: validates its configuration and yields its ports.
  g.inputs_.resize(n);
  g.outputs_.resize(n);
  std::vector<bool> constructed(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      auto node = make_node(spec.nodes[i], NodeContext{});
      g.inputs_[i] = node->inputs();
      g.outputs_[i] = node->outputs();
      constructed[i] = true;
    } catch (const std::exception& e) {
      errors.push_back(e.what());
    }
  }

  auto port_of = [](const std::vector<std::string>& ports, const std::string& p) -> std::optional<std::size_t> {
    auto it = std::find(ports.begin(), ports.end(), p);
    if (it == ports.end()) return std::nullopt;
    return static_cast<std::size_t>(it - ports.begin());
  };

  g.fwd_.resize(n);
  g.bwd_.resize(n);
  std::vector<std::vector<int>> in_count(n), out_count(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.fwd_[i].resize(g.outputs_[i].size());
    g.bwd_[i].resize(g.inputs_[i].size());
    in_count[i].assign(g.inputs_[i].size(), 0);
    out_count[i].assign(g.outputs_[i].size(), 0);
  }

  std::vector<std::vector<std::size_t>> succ(n);
  for (const auto& e : spec.edges) {
    const std::string label = e.from + ":" + e.from_port + " -> " + e.to + ":" + e.to_port;
    auto fi = index.find(e.from);
    auto ti = index.find(e.to);
    if (fi == index.end() || ti == index.end()) {
      errors.push_back("edge " + label + " references an unknown node");
      continue;
    }
    if (!constructed[fi->second] || !constructed[ti->second]) continue;
    auto op = port_of(g.outputs_[fi->second], e.from_port);
    auto ip = port_of(g.inputs_[ti->second], e.to_port);
    if (!op) errors.push_back("edge " + label + ": '" + e.from + "' has no output port '" + e.from_port + "'");
    if (!ip) errors.push_back("edge " + label + ": '" + e.to + "' has no input port '" + e.to_port + "'");
    if (!op || !ip) continue;
    ++out_count[fi->second][*op];
    ++in_count[ti->second][*ip];
    g.fwd_[fi->second][*op] = Endpoint{static_cast<int>(ti->second), *ip};
    g.bwd_[ti->second][*ip] = Endpoint{static_cast<int>(fi->second), *op};
    succ[fi->second].push_back(ti->second);
  }

  std::set<std::string> cport_names;
  std::vector<std::size_t> roots;
  for (std::size_t c = 0; c < spec.controller.size(); ++c) {
    const auto& cp = spec.controller[c];
    if (!cport_names.insert(cp.name).second) errors.push_back("duplicate controller port '" + cp.name + "'");
    auto ti = index.find(cp.node);
    if (ti == index.end()) {
      errors.push_back("controller port '" + cp.name + "' targets unknown node '" + cp.node + "'");
      g.entry_.push_back({});
      continue;
    }
    if (!constructed[ti->second]) {
      g.entry_.push_back({});
      continue;
    }
    auto ip = port_of(g.inputs_[ti->second], cp.port);
    if (!ip) {
      errors.push_back("controller port '" + cp.name + "': '" + cp.node + "' has no input port '" + cp.port + "'");
      g.entry_.push_back({});
      continue;
    }
    ++in_count[ti->second][*ip];
    g.bwd_[ti->second][*ip] = Endpoint{Endpoint::kController, c};
    g.entry_.push_back(Endpoint{static_cast<int>(ti->second), *ip});
    roots.push_back(ti->second);
  }
  if (spec.controller.empty()) errors.push_back("graph has no controller ports");

  for (std::size_t i = 0; i < n; ++i) {
    if (!constructed[i]) continue;
    const auto& id = spec.nodes[i].id;
    for (std::size_t p = 0; p < in_count[i].size(); ++p) {
      if (in_count[i][p] == 0) errors.push_back("dangling input port " + id + ":" + g.inputs_[i][p]);
      if (in_count[i][p] > 1) errors.push_back("input port " + id + ":" + g.inputs_[i][p] + " has several sources");
    }
    for (std::size_t p = 0; p < out_count[i].size(); ++p) {
      if (out_count[i][p] == 0) errors.push_back("dangling output port " + id + ":" + g.outputs_[i][p]);
      if (out_count[i][p] > 1) errors.push_back("output port " + id + ":" + g.outputs_[i][p] + " has several targets");
    }
  }

  // Every cycle has to pass through a Phi (loop header) and an Isu (so that
  // loop iterations carry distinct states).
  for (const char* kind : {"phi", "isu"}) {
    std::vector<bool> keep(n);
    for (std::size_t i = 0; i < n; ++i) keep[i] = spec.nodes[i].kind != kind;
    std::vector<std::size_t> cycle;
    if (find_cycle(succ, keep, cycle)) {
      std::string path;
      for (auto v : cycle) path += spec.nodes[v].id + " -> ";
      path += spec.nodes[cycle.front()].id;
      errors.push_back(std::string("cycle without ") + (std::string(kind) == "phi" ? "a Phi" : "an Isu") + ": " + path);
    }
  }

  std::vector<bool> reached(n, false);
  std::deque<std::size_t> queue(roots.begin(), roots.end());
  for (auto r : roots) reached[r] = true;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    for (auto w : succ[v])
      if (!reached[w]) {
        reached[w] = true;
        queue.push_back(w);
      }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (reached[i]) continue;
    const bool is_loss = spec.nodes[i].kind == "loss";
    errors.push_back(std::string(is_loss ? "loss node" : "node") + " '" + spec.nodes[i].id +
                     "' is unreachable from the controller");
  }

  for (const auto& rg : replicas) {
    for (const auto& m : rg.members) {
      auto it = index.find(m);
      if (it == index.end()) errors.push_back("replica group '" + rg.logical + "' names unknown node '" + m + "'");
      else if (!is_parameterized_kind(spec.nodes[it->second].kind))
        errors.push_back("replica group '" + rg.logical + "' member '" + m + "' is not a PPT");
    }
  }

  if (!errors.empty()) throw ValidationError(std::move(errors));

  // Topological order ignoring back-edges into Phi nodes: an edge v -> phi is
  // a back-edge when v is reachable from phi.
  std::vector<std::vector<std::size_t>> dag(n);
  std::vector<int> indeg(n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto w : succ[v]) {
      bool back = false;
      if (spec.nodes[w].kind == "phi") {
        std::vector<bool> seen(n, false);
        std::deque<std::size_t> q{w};
        seen[w] = true;
        while (!q.empty() && !back) {
          const auto u = q.front();
          q.pop_front();
          for (auto x : succ[u]) {
            if (x == v) back = true;
            if (!seen[x]) {
              seen[x] = true;
              q.push_back(x);
            }
          }
        }
      }
      if (!back) {
        dag[v].push_back(w);
        ++indeg[w];
      }
    }
  }
  std::deque<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const auto v = ready.front();
    ready.pop_front();
    g.topo_.push_back(v);
    for (auto w : dag[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }

  g.spec_ = std::move(spec);
  g.replicas_ = std::move(replicas);
  return g;
}

int IrGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < spec_.nodes.size(); ++i)
    if (spec_.nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

std::size_t IrGraph::input_port(std::size_t node, const std::string& port) const {
  const auto& ports = inputs_[node];
  auto it = std::find(ports.begin(), ports.end(), port);
  if (it == ports.end()) throw std::out_of_range("node '" + spec_.nodes[node].id + "' has no input '" + port + "'");
  return static_cast<std::size_t>(it - ports.begin());
}

std::size_t IrGraph::output_port(std::size_t node, const std::string& port) const {
  const auto& ports = outputs_[node];
  auto it = std::find(ports.begin(), ports.end(), port);
  if (it == ports.end()) throw std::out_of_range("node '" + spec_.nodes[node].id + "' has no output '" + port + "'");
  return static_cast<std::size_t>(it - ports.begin());
}

std::size_t IrGraph::controller_port_index(const std::string& name) const {
  for (std::size_t i = 0; i < spec_.controller.size(); ++i)
    if (spec_.controller[i].name == name) return i;
  throw std::out_of_range("graph has no controller port '" + name + "'");
}

std::vector<std::string> IrGraph::topological_ids() const {
  std::vector<std::string> out;
  for (auto i : topo_) out.push_back(spec_.nodes[i].id);
  return out;
}

std::uint64_t IrGraph::structure_hash() const {
  Json j = spec_.to_json();
  Json groups = Json::array();
  for (const auto& rg : replicas_) groups.push_back({{"logical", rg.logical}, {"members", rg.members}});
  j["replicas"] = groups;
  return fnv1a(j.dump());
}

std::vector<std::unique_ptr<Node>> IrGraph::instantiate(const NodeContext& ctx) const {
  std::vector<std::unique_ptr<Node>> nodes;
  nodes.reserve(spec_.nodes.size());
  for (const auto& s : spec_.nodes) nodes.push_back(make_node(s, ctx));
  return nodes;
}

IrGraph build_replicated(const IrGraph& graph, const std::string& node_id, int k) {
  if (k < 1) throw std::invalid_argument("replica count must be >= 1");
  const auto idx = graph.index_of(node_id);
  if (idx < 0) throw std::invalid_argument("cannot replicate unknown node '" + node_id + "'");
  const NodeSpec original = graph.node_spec(static_cast<std::size_t>(idx));
  if (!is_parameterized_kind(original.kind))
    throw std::invalid_argument("cannot replicate '" + node_id + "': kind '" + original.kind + "' is not a PPT");

  GraphSpec spec = graph.spec();
  spec.nodes.erase(spec.nodes.begin() + idx);

  const Json key = original.config.value("key", Json::array({"id"}));
  const std::string route = node_id + ".route";
  const std::string join = node_id + ".join";

  ReplicaGroup group{node_id, {}};
  std::vector<std::string> join_inputs;
  spec.add_node(route, "cond", {{"predicate", {{"type", "key_mod"}, {"fields", key}, {"k", k}}}});
  for (int r = 0; r < k; ++r) {
    NodeSpec replica = original;
    replica.id = node_id + ".r" + std::to_string(r);
    if (!replica.config.contains("init_seed")) replica.config["init_seed"] = node_id;
    spec.nodes.push_back(replica);
    spec.connect(route + ":" + std::to_string(r), replica.id);
    join_inputs.push_back("r" + std::to_string(r));
    spec.connect(replica.id, join + ":r" + std::to_string(r));
    group.members.push_back(replica.id);
  }
  spec.add_node(join, "phi", {{"inputs", join_inputs}, {"key", key}});

  for (auto& e : spec.edges) {
    if (e.to == node_id) e.to = route;
    if (e.from == node_id) e.from = join;
  }
  for (auto& c : spec.controller)
    if (c.node == node_id) c.node = route;

  auto groups = graph.replica_groups();
  groups.push_back(std::move(group));
  return IrGraph::build(std::move(spec), std::move(groups));
}

}  // namespace ampnet
