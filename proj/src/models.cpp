#include "ampnet/models.hpp"

#include <algorithm>
#include <stdexcept>

namespace ampnet {

namespace {

Json keyed(std::vector<std::string> key, Json config = Json::object()) {
  config["key"] = std::move(key);
  return config;
}

Json compare(const std::string& lhs, const std::string& op, Json rhs) {
  return {{"type", "compare"}, {"lhs", lhs}, {"op", op}, {"rhs", std::move(rhs)}};
}

Tensor label_tensor(int label) { return Tensor::scalar(static_cast<Scalar>(label)); }

}  // namespace

// ---- MLP ----

GraphSpec build_mlp_spec(const std::vector<int>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
  for (int d : dims)
    if (d <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
  GraphSpec g;
  std::string prev;
  const std::size_t layers = dims.size() - 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string lin = "l" + std::to_string(i + 1);
    Json cfg = {{"in", dims[i]}, {"out", dims[i + 1]}};
    if (i == 0) cfg["input_grad"] = false;
    g.add_node(lin, "linear", cfg);
    if (prev.empty()) g.add_controller("x", lin);
    else g.connect(prev, lin);
    prev = lin;
    if (i + 1 < layers) {
      const std::string act = "relu" + std::to_string(i + 1);
      g.add_node(act, "activation", {{"fn", "relu"}});
      g.connect(prev, act);
      prev = act;
    }
  }
  g.add_node("loss", "loss", {{"loss", "softmax_ce"}});
  g.connect(prev, "loss:pred");
  g.add_controller("label", "loss:label", false);
  return g;
}

Instance mlp_instance(const DenseInstance& x) {
  Instance inst;
  inst.items.push_back({"x", Tensor(1, x.features.size(), x.features), State()});
  inst.items.push_back({"label", label_tensor(x.label), State()});
  return inst;
}

// ---- RNN ----

GraphSpec build_rnn_spec(const RnnOptions& opt) {
  const int h = opt.hidden;
  const int e = opt.embed > 0 ? opt.embed : h;
  if (h <= 0 || opt.vocab <= 0 || opt.classes <= 0) throw std::invalid_argument("rnn sizes must be positive");
  GraphSpec g;
  const std::vector<std::string> step_key{"id", "t"};
  g.add_node("embed", "embedding", keyed(step_key, {{"vocab", opt.vocab}, {"dim", e}, {"input_grad", false}}));
  g.add_node("phi", "phi", keyed(step_key, {{"inputs", Json::array({"init", "loop"})}}));
  g.add_node("concat", "concat", keyed(step_key, {{"inputs", Json::array({"x", "h"})}, {"state_from", "h"}}));
  g.add_node("linear1", "linear", keyed(step_key, {{"in", e + h}, {"out", h}}));
  g.add_node("relu", "activation", keyed(step_key, {{"fn", "relu"}}));
  g.add_node("isu", "isu", {{"fn", {{"type", "increment"}, {"field", "t"}, {"by", 1}}}});
  g.add_node("cond", "cond", {{"predicate", compare("t", "<", "len")}});
  g.add_node("linear2", "linear", {{"in", h}, {"out", opt.classes}});
  g.add_node("loss", "loss", {{"loss", "softmax_ce"}});

  g.add_controller("tokens", "embed");
  g.add_controller("h0", "phi:init");
  g.add_controller("label", "loss:label", false);
  g.connect("embed", "concat:x");
  g.connect("phi", "concat:h");
  g.connect("concat", "linear1");
  g.connect("linear1", "relu");
  g.connect("relu", "isu");
  g.connect("isu", "cond");
  g.connect("cond:true", "phi:loop");
  g.connect("cond:false", "linear2");
  g.connect("linear2", "loss:pred");
  return g;
}

Instance rnn_instance(const std::vector<int>& tokens, int label, int hidden) {
  if (tokens.empty()) throw std::invalid_argument("rnn instance needs at least one token");
  const auto len = static_cast<std::int64_t>(tokens.size());
  Instance inst;
  for (std::int64_t t = 0; t < len; ++t)
    inst.items.push_back({"tokens", Tensor::scalar(static_cast<Scalar>(tokens[static_cast<std::size_t>(t)])),
                          State(0, {{"t", t}})});
  inst.items.push_back({"h0", Tensor(1, static_cast<std::size_t>(hidden)), State(0, {{"t", 0}, {"len", len}})});
  inst.items.push_back({"label", label_tensor(label), State()});
  return inst;
}

Instance rnn_instance(const ListReductionInstance& x, int hidden) { return rnn_instance(x.tokens(), x.label, hidden); }

// ---- tree ----

GraphSpec build_tree_spec(const TreeOptions& opt) {
  const int h = opt.hidden;
  if (h <= 0 || opt.vocab <= 0 || opt.classes <= 0) throw std::invalid_argument("tree sizes must be positive");
  GraphSpec g;
  const std::vector<std::string> node_key{"id", "node"};
  Json lookup = keyed(node_key, {{"vocab", opt.vocab}, {"dim", h}, {"input_grad", false}});
  if (opt.embedding_muf > 0) lookup["min_update_frequency"] = opt.embedding_muf;
  g.add_node("lookup", "embedding", lookup);
  g.add_node("leaf_linear", "linear", keyed(node_key, {{"in", h}, {"out", h}}));
  g.add_node("leaf_tanh", "activation", keyed(node_key, {{"fn", "tanh"}}));
  g.add_node("phi", "phi", keyed(node_key, {{"inputs", Json::array({"init", "loop"})}}));
  g.add_node("is_root", "cond", {{"predicate", compare("node", "==", {{"aux", "root"}})}});
  g.add_node("bcast", "bcast", keyed(node_key, {{"outputs", Json::array({"inner", "up"})}}));
  g.add_node("ascend", "isu",
             {{"fn",
               {{"type", "ascend"},
                {"field", "node"},
                {"parent", "parent"},
                {"slot_field", "slot"},
                {"slot", "child_slot"},
                {"children", Json::array({"child0", "child1"})}}}});
  g.add_node("siblings", "group",
             keyed(node_key, {{"count", {{"const", 2}}}, {"order_by", Json::array({"slot"})}, {"drop", Json::array({"slot"})}}));
  g.add_node("pair", "reshape", keyed(node_key, {{"to", "row"}}));
  g.add_node("branch_linear", "linear", keyed(node_key, {{"in", 2 * h}, {"out", h}}));
  g.add_node("branch_tanh", "activation", keyed(node_key, {{"fn", "tanh"}}));
  g.add_node("phi2", "phi", keyed(node_key, {{"inputs", Json::array({"root", "inner"})}}));
  g.add_node("classifier", "linear", keyed(node_key, {{"in", h}, {"out", opt.classes}}));
  g.add_node("loss", "loss", keyed(node_key, {{"loss", "softmax_ce"}}));

  g.add_controller("leaves", "lookup");
  g.add_controller("labels", "loss:label", false);
  g.connect("lookup", "leaf_linear");
  g.connect("leaf_linear", "leaf_tanh");
  g.connect("leaf_tanh", "phi:init");
  g.connect("phi", "is_root");
  g.connect("is_root:true", "phi2:root");
  g.connect("is_root:false", "bcast");
  g.connect("bcast:inner", "phi2:inner");
  g.connect("bcast:up", "ascend");
  g.connect("ascend", "siblings");
  g.connect("siblings", "pair");
  g.connect("pair", "branch_linear");
  g.connect("branch_linear", "branch_tanh");
  g.connect("branch_tanh", "phi:loop");
  g.connect("phi2", "classifier");
  g.connect("classifier", "loss:pred");
  return g;
}

Instance tree_instance(const TreeInstance& t) {
  const auto n = t.size();
  for (std::size_t v = 0; v < n; ++v) {
    const bool leaf = t.is_leaf(v);
    if (leaf != (t.child1[v] < 0)) throw std::invalid_argument("tree node " + std::to_string(v) + " is not binary");
    if (static_cast<std::int64_t>(v) != t.root && t.parent[v] < 0)
      throw std::invalid_argument("tree node " + std::to_string(v) + " has no parent");
  }
  auto aux = std::make_shared<InstanceAux>();
  aux->set_scalar("root", t.root);
  aux->set_table("parent", t.parent);
  aux->set_table("child_slot", t.slot);
  aux->set_table("child0", t.child0);
  aux->set_table("child1", t.child1);

  Instance inst;
  inst.aux = aux;
  inst.expected_losses = n;
  for (std::size_t v = 0; v < n; ++v) {
    const auto node = static_cast<std::int64_t>(v);
    if (t.is_leaf(v))
      inst.items.push_back({"leaves", Tensor::scalar(static_cast<Scalar>(t.token[v])), State(0, {{"node", node}})});
    inst.items.push_back({"labels", label_tensor(t.label[v]), State(0, {{"node", node}})});
  }
  return inst;
}

// ---- GGSNN ----

GraphSpec build_ggsnn_spec(const GgsnnOptions& opt) {
  const int h = opt.hidden;
  if (h <= 0 || opt.steps < 0 || opt.edge_types <= 0 || opt.annotation_vocab <= 0)
    throw std::invalid_argument("ggsnn sizes must be positive");
  GraphSpec g;
  const std::vector<std::string> step_key{"id", "step"};
  const std::vector<std::string> type_key{"id", "step", "etype"};

  g.add_node("annotate", "embedding", {{"vocab", opt.annotation_vocab}, {"dim", h}, {"input_grad", false}});
  g.add_node("phi", "phi", keyed(step_key, {{"inputs", Json::array({"init", "loop"})}}));
  g.add_node("more_steps", "cond", {{"predicate", compare("step", "<", opt.steps)}});
  g.add_node("bcast", "bcast", keyed(step_key, {{"outputs", Json::array({"msg", "self"})}}));
  g.add_node("per_node", "ungroup", keyed(step_key, {{"index_field", "node"}}));
  g.add_node("per_edge", "flatmap",
             keyed({"id", "step", "node"},
                   {{"generator", {{"list", "out_edges"}, {"index", "node"}, {"field", "edge"}}},
                    {"expansions",
                     {{{"field", "etype"}, {"table", "edge_type"}, {"index", "edge"}},
                      {{"field", "dst"}, {"table", "edge_dst"}, {"index", "edge"}}}}}));
  g.add_node("by_type", "group",
             keyed(type_key, {{"count", {{"aux_list_size", "edges_by_type"}, {"index", "etype"}}},
                              {"order_by", Json::array({"edge"})},
                              {"drop", Json::array({"node", "edge", "dst"})}}));
  g.add_node("route_type", "cond", {{"predicate", {{"type", "switch"}, {"field", "etype"}, {"cases", opt.edge_types}}}});
  std::vector<std::string> type_ports;
  for (int c = 0; c < opt.edge_types; ++c) {
    const auto cs = std::to_string(c);
    type_ports.push_back(cs);
    g.add_node("edge_linear" + cs, "linear", keyed(type_key, {{"in", h}, {"out", h}, {"bias", false}}));
  }
  g.add_node("phi_type", "phi", keyed(type_key, {{"inputs", type_ports}}));
  g.add_node("per_message", "ungroup",
             keyed(type_key, {{"index_field", "k"},
                              {"expansions",
                               {{{"field", "edge"}, {"list", "edges_by_type"}, {"index", "etype"}},
                                {{"field", "node"}, {"table", "edge_src"}, {"index", "edge"}},
                                {{"field", "dst"}, {"table", "edge_dst"}, {"index", "edge"}}}}}));
  g.add_node("by_dst", "group",
             keyed({"id", "step", "dst"}, {{"count", {{"aux_list_size", "in_edges"}, {"index", "dst"}}},
                                           {"order_by", Json::array({"edge"})},
                                           {"drop", Json::array({"etype", "k", "edge", "node"})}}));
  g.add_node("incoming", "sum_rows", keyed({"id", "step", "dst"}));
  g.add_node("all_nodes", "group",
             keyed(step_key, {{"count", {{"aux_scalar", "num_nodes"}}}, {"order_by", Json::array({"dst"})}, {"drop", Json::array({"dst"})}}));
  g.add_node("concat", "concat", keyed(step_key, {{"inputs", Json::array({"a", "h"})}, {"state_from", "h"}}));
  g.add_node("gru", "gru", keyed(step_key, {{"hidden", h}}));
  g.add_node("next_step", "isu", {{"fn", {{"type", "increment"}, {"field", "step"}, {"by", 1}}}});
  g.add_node("readout", "linear", {{"in", h}, {"out", 1}});
  g.add_node("scores", "reshape", {{"to", "row"}});
  g.add_node("loss", "loss", {{"loss", "softmax_ce"}});

  g.add_controller("annotations", "annotate");
  g.add_controller("label", "loss:label", false);
  g.connect("annotate", "phi:init");
  g.connect("phi", "more_steps");
  g.connect("more_steps:true", "bcast");
  g.connect("more_steps:false", "readout");
  g.connect("bcast:msg", "per_node");
  g.connect("bcast:self", "concat:h");
  g.connect("per_node", "per_edge");
  g.connect("per_edge", "by_type");
  g.connect("by_type", "route_type");
  for (const auto& c : type_ports) {
    g.connect("route_type:" + c, "edge_linear" + c);
    g.connect("edge_linear" + c, "phi_type:" + c);
  }
  g.connect("phi_type", "per_message");
  g.connect("per_message", "by_dst");
  g.connect("by_dst", "incoming");
  g.connect("incoming", "all_nodes");
  g.connect("all_nodes", "concat:a");
  g.connect("concat", "gru");
  g.connect("gru", "next_step");
  g.connect("next_step", "phi:loop");
  g.connect("readout", "scores");
  g.connect("scores", "loss:pred");
  return g;
}

Instance ggsnn_instance(const GraphInstance& g) {
  const auto n = g.num_nodes;
  if (n <= 0 || static_cast<std::int64_t>(g.annotation.size()) != n)
    throw std::invalid_argument("graph instance: annotation size does not match node count");
  std::int64_t types = 0;
  for (const auto& e : g.edges) {
    if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n || e.type < 0)
      throw std::invalid_argument("graph instance: edge out of range");
    types = std::max(types, e.type + 1);
  }
  std::vector<std::vector<std::int64_t>> out_edges(static_cast<std::size_t>(n)), in_edges(static_cast<std::size_t>(n)),
      by_type(static_cast<std::size_t>(types));
  std::vector<std::int64_t> etype, esrc, edst;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const auto& e = g.edges[i];
    const auto id = static_cast<std::int64_t>(i);
    out_edges[static_cast<std::size_t>(e.src)].push_back(id);
    in_edges[static_cast<std::size_t>(e.dst)].push_back(id);
    by_type[static_cast<std::size_t>(e.type)].push_back(id);
    etype.push_back(e.type);
    esrc.push_back(e.src);
    edst.push_back(e.dst);
  }
  for (std::int64_t v = 0; v < n; ++v)
    if (in_edges[static_cast<std::size_t>(v)].empty())
      throw std::invalid_argument("graph instance: node " + std::to_string(v) + " has no incoming edge");

  auto aux = std::make_shared<InstanceAux>();
  aux->set_scalar("num_nodes", n);
  aux->set_lists("out_edges", std::move(out_edges));
  aux->set_lists("in_edges", std::move(in_edges));
  aux->set_lists("edges_by_type", std::move(by_type));
  aux->set_table("edge_type", std::move(etype));
  aux->set_table("edge_src", std::move(esrc));
  aux->set_table("edge_dst", std::move(edst));

  Tensor ann(static_cast<std::size_t>(n), 1);
  for (std::int64_t v = 0; v < n; ++v) ann[static_cast<std::size_t>(v)] = static_cast<Scalar>(g.annotation[static_cast<std::size_t>(v)]);

  Instance inst;
  inst.aux = aux;
  inst.items.push_back({"annotations", std::move(ann), State(0, {{"step", 0}})});
  inst.items.push_back({"label", label_tensor(g.label), State()});
  return inst;
}

}  // namespace ampnet
