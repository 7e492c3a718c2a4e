#pragma once

// Runtime and combinator invariants checked under randomized placements,
// asynchrony settings and seeds. Each check returns a list of failures
// (empty means green) so that both the unit tests and the acceptance runner
// can report them.

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ampnet/datasets.hpp"
#include "ampnet/graph.hpp"
#include "ampnet/models.hpp"
#include "ampnet/runtime.hpp"
#include "ampnet/state_fns.hpp"

namespace invariants {

using namespace ampnet;

struct Workload {
  std::string name;
  IrGraph graph;
  std::vector<Instance> data;
};

inline std::vector<Workload> workloads(std::uint64_t seed, std::size_t n = 24) {
  std::vector<Workload> out;
  {
    std::vector<Instance> d;
    for (const auto& x : gen_synthetic_images(n, 12, 4, seed, 1)) d.push_back(mlp_instance(x));
    out.push_back({"mlp", IrGraph::build(build_mlp_spec({12, 10, 8, 6, 4})), std::move(d)});
  }
  {
    std::vector<Instance> d;
    for (const auto& x : gen_list_reduction(n, seed)) d.push_back(rnn_instance(x, 8));
    out.push_back({"rnn", IrGraph::build(build_rnn_spec({8})), d});
    auto replicated = build_replicated(build_replicated(IrGraph::build(build_rnn_spec({8})), "linear1", 2), "linear2", 3);
    out.push_back({"rnn_replicated", std::move(replicated), std::move(d)});
  }
  {
    std::vector<Instance> d;
    for (const auto& t : gen_trees(n, 1, 4, 16, seed)) d.push_back(tree_instance(t));
    out.push_back({"tree", IrGraph::build(build_tree_spec({})), std::move(d)});
  }
  {
    std::vector<Instance> d;
    for (const auto& g : gen_babi15_like(n / 2, 8, seed)) d.push_back(ggsnn_instance(g));
    out.push_back({"ggsnn", IrGraph::build(build_ggsnn_spec({})), std::move(d)});
  }
  return out;
}

struct RunSettings {
  int threads = 1;
  int max_active_keys = 1;
  std::int64_t muf = 1;
  std::map<std::string, int> placement;

  std::string describe() const {
    std::ostringstream os;
    os << "threads=" << threads << " mak=" << max_active_keys << " muf=" << muf;
    return os.str();
  }
};

inline RunSettings random_settings(const IrGraph& g, std::mt19937_64& rng) {
  RunSettings s;
  s.threads = static_cast<int>(rng() % 4) + 1;
  s.max_active_keys = static_cast<int>(rng() % 8) + 1;
  s.muf = static_cast<std::int64_t>(rng() % 20) + 1;
  // Leave some nodes to the default heuristic, pin the rest anywhere.
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (rng() % 3) s.placement[g.node_spec(i).id] = static_cast<int>(rng() % static_cast<std::uint64_t>(s.threads));
  return s;
}

inline std::vector<std::vector<Tensor>> snapshot(Runtime& rt) {
  std::vector<std::vector<Tensor>> w;
  for (const auto& id : rt.graph().topological_ids())
    if (const auto* b = rt.node(id).params()) w.push_back(b->weights);
  return w;
}

/// Two training epochs plus an evaluation of one workload under `s`.
inline std::vector<std::string> check_runtime(const Workload& w, const RunSettings& s, std::uint64_t seed) {
  std::vector<std::string> fails;
  auto fail = [&](const std::string& what) { fails.push_back(w.name + " [" + s.describe() + "]: " + what); };

  TrainConfig tc;
  tc.threads = s.threads;
  tc.max_active_keys = s.max_active_keys;
  tc.min_update_frequency = s.muf;
  tc.placement = s.placement;
  tc.seed = seed;
  tc.diagnostics = true;
  tc.optimizer.lr = 0.05;
  Runtime rt(w.graph, tc);

  std::size_t expected_losses = 0;
  for (const auto& inst : w.data) expected_losses += inst.expected_losses;

  auto check_report = [&](const EpochReport& r, const char* phase) {
    const std::string p = std::string(phase) + ": ";
    if (r.messages_enqueued != r.messages_dequeued)
      fail(p + "message conservation, enqueued " + std::to_string(r.messages_enqueued) + " vs dequeued " +
           std::to_string(r.messages_dequeued));
    if (r.messages_enqueued == 0) fail(p + "no messages were counted");
    if (r.max_active_observed < 1 || r.max_active_observed > s.max_active_keys)
      fail(p + "max active keys observed " + std::to_string(r.max_active_observed));
    if (r.loss_records != expected_losses)
      fail(p + "loss records " + std::to_string(r.loss_records) + " vs expected " + std::to_string(expected_losses));
    const auto live = rt.live_cache_keys();
    if (!live.empty()) fail(p + "cache not empty, first entry " + live.front());
  };

  try {
    for (int epoch = 0; epoch < 2; ++epoch) {
      rt.reset_diagnostics();
      check_report(rt.train_epoch(w.data), "train");
      const auto balances = rt.port_balances();
      if (balances.empty()) fail("no restoration balances recorded");
      for (const auto& b : balances)
        if (!b.balanced)
          fail("state restoration on " + b.node + ":" + b.port + " (forward " + std::to_string(b.forward) +
               ", backward " + std::to_string(b.backward) + ")");
    }
    const auto before = snapshot(rt);
    check_report(rt.evaluate(w.data), "evaluate");
    if (snapshot(rt) != before) fail("evaluation changed the weights");
    for (const auto& g : w.graph.replica_groups()) {
      const auto& first = rt.node(g.members.front()).params()->weights;
      for (const auto& m : g.members)
        if (rt.node(m).params()->weights != first) fail("replica " + m + " differs from " + g.members.front());
    }
  } catch (const std::exception& e) {
    fail(std::string("exception: ") + e.what());
  }
  rt.shutdown();
  return fails;
}

inline std::vector<std::string> check_isu_roundtrip(std::uint64_t seed, int states) {
  std::vector<std::string> fails;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> val(-100000, 100000);
  const std::int64_t by = static_cast<std::int64_t>(rng() % 9) + 1;
  const auto f = IsuFn::parse({{"type", "increment"}, {"field", "t"}, {"by", seed % 2 ? by : -by}});
  for (int i = 0; i < states && fails.size() < 5; ++i) {
    State s(val(rng), {{"t", val(rng)}});
    if (rng() % 2) s.set("len", val(rng));
    if (rng() % 2) s.set("node", val(rng));
    if (!(f.invert(f.apply(s)) == s) || !(f.apply(f.invert(s)) == s)) fails.push_back("isu roundtrip " + s.to_string());
  }
  return fails;
}

inline Message forward_message(Tensor payload, State s) {
  Message m;
  m.payload = std::move(payload);
  m.state = std::move(s);
  return m;
}

inline Message backward_message(Tensor payload, State s) {
  Message m;
  m.direction = Direction::kBackward;
  m.payload = std::move(payload);
  m.state = std::move(s);
  return m;
}

inline Tensor random_rows(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

/// Ungroup(Group(members)) restores every member payload and state, and the
/// gradients route back to the original members.
inline std::vector<std::string> check_group_ungroup(std::uint64_t seed) {
  std::vector<std::string> fails;
  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(rng() % 7) + 1;
  const std::size_t cols = rng() % 4 + 1;
  NodeContext ctx;
  auto group = make_node({"g", "group", {{"count", {{"field", "n"}}}, {"order_by", "j"}, {"drop", "j"}}}, ctx);
  auto ungroup = make_node({"u", "ungroup", {{"index_field", "j"}}}, ctx);

  std::vector<Message> members;
  for (int j = 0; j < n; ++j) members.push_back(forward_message(random_rows(1, cols, rng), State(7, {{"j", j}, {"n", n}})));
  auto shuffled = members;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CollectingEmitter ge, ue;
  for (auto& m : shuffled) group->forward(0, m, ge);
  if (ge.out.size() != 1) return {"group emitted " + std::to_string(ge.out.size()) + " messages"};
  ungroup->forward(0, ge.out[0].msg, ue);
  if (ue.out.size() != static_cast<std::size_t>(n)) return {"ungroup emitted " + std::to_string(ue.out.size())};
  for (int j = 0; j < n; ++j)
    if (!(ue.out[j].msg.payload == members[j].payload) || !(ue.out[j].msg.state == members[j].state))
      fails.push_back("member " + std::to_string(j) + " not restored");

  std::vector<Tensor> grads;
  for (int j = 0; j < n; ++j) grads.push_back(random_rows(1, cols, rng));
  CollectingEmitter ub, gb;
  for (int j = n; j-- > 0;) ungroup->backward(0, backward_message(grads[j], members[j].state), ub);
  if (ub.out.size() != 1) return {"ungroup backward emitted " + std::to_string(ub.out.size())};
  group->backward(0, ub.out[0].msg, gb);
  if (gb.out.size() != static_cast<std::size_t>(n)) fails.push_back("group backward emitted " + std::to_string(gb.out.size()));
  for (const auto& o : gb.out) {
    const auto j = static_cast<std::size_t>(o.msg.state.get("j"));
    if (!(o.msg.payload == grads[j])) fails.push_back("gradient of member " + std::to_string(j) + " misrouted");
  }
  if (!group->cached_keys().empty() || !ungroup->cached_keys().empty()) fails.push_back("group/ungroup caches not empty");
  return fails;
}

/// Flatmap backward is the sum of its copies' gradients and is linear in them.
inline std::vector<std::string> check_flatmap_linearity(std::uint64_t seed) {
  constexpr double kTol = 1e-12;
  std::vector<std::string> fails;
  std::mt19937_64 rng(seed);
  const std::int64_t k = static_cast<std::int64_t>(rng() % 6) + 1;
  NodeContext ctx;
  auto f = make_node({"f", "flatmap", {{"generator", {{"range", k}, {"field", "j"}}}}}, ctx);
  const Tensor x = random_rows(1, 3, rng);

  auto backward_sum = [&](const std::vector<Tensor>& grads) {
    CollectingEmitter e;
    f->forward(0, forward_message(x, State(3)), e);
    std::vector<State> states;
    for (const auto& o : e.out) states.push_back(o.msg.state);
    e.clear();
    for (std::size_t j = 0; j < grads.size(); ++j) f->backward(0, backward_message(grads[j], states[j]), e);
    return e.out.at(0).msg.payload;
  };
  std::vector<Tensor> g1, g2, mix;
  Tensor sum(1, 3);
  const double a = 1.7, b = -0.4;
  for (std::int64_t j = 0; j < k; ++j) {
    g1.push_back(random_rows(1, 3, rng));
    g2.push_back(random_rows(1, 3, rng));
    mix.push_back(add(scale(g1.back(), a), scale(g2.back(), b)));
    add_inplace(sum, g1.back());
  }
  const Tensor r1 = backward_sum(g1), r2 = backward_sum(g2), rm = backward_sum(mix);
  for (std::size_t i = 0; i < 3; ++i) {
    if (std::abs(r1[i] - sum[i]) > kTol) fails.push_back("flatmap gradient is not the sum of copies");
    if (std::abs(rm[i] - (a * r1[i] + b * r2[i])) > kTol) fails.push_back("flatmap gradient is not linear");
  }
  return fails;
}

}  // namespace invariants
