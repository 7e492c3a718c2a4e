#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "invariants.hpp"

using namespace ampnet;

namespace {

constexpr int kSeeds = 20;

std::vector<Instance> rnn_data(std::size_t n, std::uint64_t seed, int hidden = 8) {
  std::vector<Instance> d;
  for (const auto& x : gen_list_reduction(n, seed)) d.push_back(rnn_instance(x, hidden));
  return d;
}

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += x + "\n";
  return s;
}

}  // namespace

TEST(RuntimeInvariants, RandomizedPlacementsAndAsynchrony) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) * 7919 + 1);
    for (const auto& w : invariants::workloads(static_cast<std::uint64_t>(seed))) {
      const auto settings = invariants::random_settings(w.graph, rng);
      const auto fails = invariants::check_runtime(w, settings, static_cast<std::uint64_t>(seed));
      EXPECT_TRUE(fails.empty()) << "seed " << seed << "\n" << joined(fails);
    }
  }
}

TEST(RuntimeInvariants, CombinatorProperties) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    EXPECT_TRUE(invariants::check_isu_roundtrip(s, 10000).empty()) << seed;
    EXPECT_TRUE(invariants::check_group_ungroup(s).empty()) << joined(invariants::check_group_ungroup(s));
    EXPECT_TRUE(invariants::check_flatmap_linearity(s).empty()) << joined(invariants::check_flatmap_linearity(s));
  }
}

TEST(Runtime, IncompleteGroupIsReportedAsDeadlock) {
  GraphSpec g;
  g.add_node("g", "group", {{"count", 3}});
  g.add_node("loss", "loss");
  g.add_controller("x", "g");
  g.add_controller("label", "loss:label", false);
  g.connect("g", "loss:pred");

  Instance inst;
  inst.items.push_back({"x", Tensor(1, 2), State()});
  inst.items.push_back({"label", Tensor::from({{1}}), State()});
  TrainConfig tc;
  tc.threads = 2;
  Runtime rt(IrGraph::build(g), tc);
  try {
    rt.train_epoch({inst});
    FAIL() << "expected a deadlock";
  } catch (const DeadlockError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("deadlock"), std::string::npos) << what;
    EXPECT_NE(what.find("instance 1"), std::string::npos) << what;
    EXPECT_NE(what.find("cached"), std::string::npos) << what;
  }
  EXPECT_TRUE(rt.live_cache_keys().empty());
}

TEST(Runtime, NodeErrorsNameTheNodeAndLeaveRuntimeUsable) {
  Runtime rt(IrGraph::build(build_rnn_spec({8})), {.threads = 2});
  std::vector<Instance> bad{rnn_instance(std::vector<int>{0, kListVocab + 5}, 0, 8)};
  try {
    rt.train_epoch(bad);
    FAIL() << "expected an execution error";
  } catch (const DeadlockError&) {
    FAIL() << "reported as deadlock";
  } catch (const ExecutionError& e) {
    EXPECT_NE(std::string(e.what()).find("'embed'"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(rt.live_cache_keys().empty());
  const auto r = rt.train_epoch(rnn_data(10, 3));
  EXPECT_EQ(r.instances, 10u);
  EXPECT_EQ(r.loss_records, 10u);
}

TEST(Runtime, UnknownControllerPortIsRejected) {
  Runtime rt(IrGraph::build(build_rnn_spec({8})), {});
  Instance inst = rnn_data(1, 1)[0];
  inst.items[0].port = "nowhere";
  EXPECT_THROW(rt.train_epoch({inst}), std::invalid_argument);
}

TEST(Runtime, SynchronousRunsAreDeterministic) {
  const auto data = rnn_data(40, 5);
  auto weights = [&](int threads) {
    TrainConfig tc;
    tc.threads = threads;
    tc.min_update_frequency = 4;
    tc.seed = 17;
    Runtime rt(IrGraph::build(build_rnn_spec({8})), tc);
    rt.train_epoch(data);
    return invariants::snapshot(rt);
  };
  const auto a = weights(1);
  EXPECT_EQ(a, weights(1));
  EXPECT_EQ(a, weights(3));
}

TEST(Runtime, EvaluationLeavesWeightsAndCachesUntouched) {
  Runtime rt(IrGraph::build(build_tree_spec({})), {.threads = 3, .max_active_keys = 4});
  std::vector<Instance> data;
  for (const auto& t : gen_trees(20, 1, 4, 16, 2)) data.push_back(tree_instance(t));
  const auto before = invariants::snapshot(rt);
  const auto r = rt.evaluate(data);
  EXPECT_EQ(invariants::snapshot(rt), before);
  EXPECT_EQ(r.updates, 0);
  EXPECT_GT(r.loss_records, data.size());
  EXPECT_TRUE(rt.live_cache_keys().empty());
}

TEST(Runtime, UpdateFrequencyOverridesDeferUpdates) {
  TrainConfig tc;
  tc.threads = 2;
  tc.min_update_frequency = 1;
  tc.muf_overrides = {{"linear2", 1000000}};
  Runtime rt(IrGraph::build(build_rnn_spec({8})), tc);
  const auto w1 = rt.node("linear1").params()->weights;
  const auto w2 = rt.node("linear2").params()->weights;
  rt.run(rnn_data(20, 4), {false, false});
  EXPECT_NE(rt.node("linear1").params()->weights, w1);
  EXPECT_EQ(rt.node("linear2").params()->weights, w2);
  rt.flush_updates();
  EXPECT_NE(rt.node("linear2").params()->weights, w2);

  const auto g = IrGraph::build(build_rnn_spec({8}));
  EXPECT_THROW(Runtime(g, {.muf_overrides = {{"relu", 2}}}), std::invalid_argument);
  EXPECT_THROW(Runtime(g, {.muf_overrides = {{"ghost", 2}}}), std::invalid_argument);
  EXPECT_THROW(Runtime(g, {.muf_overrides = {{"linear1", 0}}}), std::invalid_argument);
}

TEST(Runtime, PlacementIsHonoredAndValidated) {
  const auto g = IrGraph::build(build_rnn_spec({8}));
  Runtime rt(g, {.threads = 3, .placement = {{"linear1", 2}, {"loss", 0}}});
  EXPECT_EQ(rt.worker_of("linear1"), 2);
  EXPECT_EQ(rt.worker_of("loss"), 0);
  EXPECT_THROW(rt.worker_of("ghost"), std::out_of_range);
  EXPECT_THROW(rt.node("ghost"), std::out_of_range);
  EXPECT_THROW(Runtime(g, {.threads = 2, .placement = {{"linear1", 2}}}), std::invalid_argument);
  EXPECT_THROW(Runtime(g, {.threads = 2, .placement = {{"ghost", 0}}}), std::invalid_argument);
  EXPECT_THROW(Runtime(g, {.threads = 0}), std::invalid_argument);
  EXPECT_THROW(Runtime(g, {.max_active_keys = 0}), std::invalid_argument);

  const auto d = default_placement(g, 2);
  ASSERT_EQ(d.size(), g.node_count());
  EXPECT_NE(d[static_cast<std::size_t>(g.index_of("linear1"))], d[static_cast<std::size_t>(g.index_of("linear2"))]);
}

TEST(Runtime, EventLogHasOneJsonObjectPerLine) {
  const auto path = std::filesystem::temp_directory_path() / "ampnet_test_events.jsonl";
  std::filesystem::remove(path);
  {
    Runtime rt(IrGraph::build(build_rnn_spec({8})), {.threads = 2, .event_log = path.string()});
    rt.train_epoch(rnn_data(3, 8));
  }
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  std::set<std::string> nodes;
  while (std::getline(in, line)) {
    const Json j = Json::parse(line);
    nodes.insert(j.at("node").get<std::string>());
    ++lines;
  }
  EXPECT_GT(lines, 10u);
  EXPECT_TRUE(nodes.count("linear1"));
  std::filesystem::remove(path);
}

TEST(Runtime, ShutdownIsIdempotentAndFinal) {
  Runtime rt(IrGraph::build(build_rnn_spec({8})), {.threads = 2});
  rt.shutdown();
  rt.shutdown();
  EXPECT_THROW(rt.train_epoch(rnn_data(2, 1)), ExecutionError);
}
