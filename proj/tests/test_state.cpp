#include <gtest/gtest.h>

#include <random>
#include <set>
#include <unordered_set>

#include "ampnet/state.hpp"
#include "ampnet/state_fns.hpp"

using namespace ampnet;

namespace {

constexpr int kSeeds = 20;
constexpr int kStatesPerSeed = 10000;

State random_state(std::mt19937_64& rng) {
  static const std::vector<std::string> names{"t", "len", "node", "slot", "dst", "etype", "k"};
  std::uniform_int_distribution<std::int64_t> val(-1000, 1000);
  State s(std::uniform_int_distribution<std::int64_t>(1, 1 << 20)(rng));
  for (const auto& n : names)
    if (rng() % 2) s.set(n, val(rng));
  s.set("t", val(rng));
  return s;
}

// Random binary tree in post order: aux tables parent / child_slot / child0 / child1.
std::shared_ptr<InstanceAux> random_tree_aux(int leaves, std::mt19937_64& rng, std::int64_t& root) {
  std::vector<std::int64_t> parent, slot, c0, c1;
  std::vector<std::int64_t> frontier;
  for (int i = 0; i < leaves; ++i) {
    frontier.push_back(static_cast<std::int64_t>(parent.size()));
    parent.push_back(-1);
    slot.push_back(-1);
    c0.push_back(-1);
    c1.push_back(-1);
  }
  while (frontier.size() > 1) {
    const auto i = rng() % (frontier.size() - 1);
    const auto l = frontier[i], r = frontier[i + 1];
    const auto p = static_cast<std::int64_t>(parent.size());
    parent.push_back(-1);
    slot.push_back(-1);
    c0.push_back(l);
    c1.push_back(r);
    parent[static_cast<std::size_t>(l)] = p;
    parent[static_cast<std::size_t>(r)] = p;
    slot[static_cast<std::size_t>(l)] = 0;
    slot[static_cast<std::size_t>(r)] = 1;
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(i), frontier.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    frontier.insert(frontier.begin() + static_cast<std::ptrdiff_t>(i), p);
  }
  root = frontier[0];
  auto aux = std::make_shared<InstanceAux>();
  aux->set_table("parent", parent);
  aux->set_table("child_slot", slot);
  aux->set_table("child0", c0);
  aux->set_table("child1", c1);
  aux->set_scalar("root", root);
  return aux;
}

const Json kAscend = {{"type", "ascend"},
                      {"field", "node"},
                      {"parent", "parent"},
                      {"slot_field", "slot"},
                      {"slot", "child_slot"},
                      {"children", Json::array({"child0", "child1"})}};

}  // namespace

TEST(State, FieldsAreOrderIndependent) {
  State a(7, {{"t", 1}, {"len", 4}});
  State b(7, {{"len", 4}, {"t", 1}});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_FALSE(a < b);
  EXPECT_FALSE(b < a);
  b.set("t", 2);
  EXPECT_NE(a, b);
  EXPECT_TRUE(a < b);
}

TEST(State, GetSetErase) {
  State s(3);
  EXPECT_FALSE(s.has(intern_field("t")));
  EXPECT_THROW(s.get("t"), ProtocolError);
  s.set("t", 5);
  EXPECT_EQ(s.get("t"), 5);
  EXPECT_EQ(s.find(intern_field("t")), 5);
  s.erase(intern_field("t"));
  EXPECT_EQ(s.field_count(), 0u);
  EXPECT_EQ(s.find(intern_field("t")), std::nullopt);
}

TEST(State, FieldCapacityIsEnforced) {
  State s(1);
  for (std::size_t i = 0; i < State::kMaxFields; ++i) s.set("cap" + std::to_string(i), 1);
  EXPECT_THROW(s.set("one_too_many", 1), std::exception);
}

TEST(State, AuxDoesNotTakePartInEquality) {
  State a(1, {{"t", 0}}), b(1, {{"t", 0}});
  a.set_aux(std::make_shared<InstanceAux>());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hash(), b.hash());
}

TEST(State, InternIsStable) {
  const auto id = intern_field("some_field");
  EXPECT_EQ(intern_field("some_field"), id);
  EXPECT_EQ(field_name(id), "some_field");
  EXPECT_EQ(intern_field("id"), kInstanceField);
}

TEST(Key, ProjectionAndBytes) {
  KeyFn fn(std::vector<std::string>{"id", "t"});
  const Key k = fn(State(9, {{"t", 2}, {"len", 5}}));
  ASSERT_EQ(k.size(), 2u);
  EXPECT_EQ(k[0], 9);
  EXPECT_EQ(k[1], 2);
  EXPECT_EQ(k.sum(), 11);
  const auto bytes = k.bytes();
  ASSERT_EQ(bytes.size(), 16u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 9u);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);
  EXPECT_THROW(fn(State(9)), ProtocolError);
  EXPECT_EQ(fn.names(), (std::vector<std::string>{"id", "t"}));
}

TEST(Key, DistinctStatesGiveDistinctKeys) {
  KeyFn fn(std::vector<std::string>{"id", "t"});
  std::unordered_set<Key, KeyHash> seen;
  for (std::int64_t id = 1; id <= 50; ++id)
    for (std::int64_t t = 0; t < 20; ++t) EXPECT_TRUE(seen.insert(fn(State(id, {{"t", t}}))).second);
}

TEST(Isu, IncrementRoundTripRandomStates) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const std::int64_t by = static_cast<std::int64_t>(rng() % 7) + 1;
    const auto f = IsuFn::parse({{"type", "increment"}, {"field", "t"}, {"by", seed % 2 ? by : -by}});
    for (int i = 0; i < kStatesPerSeed; ++i) {
      const State s = random_state(rng);
      ASSERT_EQ(f.invert(f.apply(s)), s) << "seed " << seed << " state " << s.to_string();
      ASSERT_EQ(f.apply(f.invert(s)), s) << "seed " << seed << " state " << s.to_string();
      ASSERT_NE(f.apply(s), s);
    }
  }
}

TEST(Isu, AscendRoundTripRandomTrees) {
  const auto f = IsuFn::parse(kAscend);
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 100);
    int checked = 0;
    while (checked < kStatesPerSeed) {
      std::int64_t root = 0;
      auto aux = random_tree_aux(static_cast<int>(rng() % 12) + 2, rng, root);
      const auto n = static_cast<std::int64_t>(aux->table("parent").size());
      for (std::int64_t v = 0; v < n && checked < kStatesPerSeed; ++v, ++checked) {
        State s(static_cast<std::int64_t>(rng() % 1000) + 1, {{"node", v}});
        s.set_aux(aux);
        if (v == root) {
          EXPECT_THROW(f.apply(s), ProtocolError);
          continue;
        }
        const State up = f.apply(s);
        ASSERT_EQ(up.get("node"), aux->table("parent")[static_cast<std::size_t>(v)]);
        ASSERT_EQ(f.invert(up), s) << "seed " << seed << " node " << v;
        ASSERT_EQ(f.apply(f.invert(up)), up);
      }
    }
  }
}

TEST(Isu, ParseErrors) {
  EXPECT_THROW(IsuFn::parse({{"type", "increment"}, {"field", "t"}, {"by", 0}}), std::invalid_argument);
  EXPECT_THROW(IsuFn::parse({{"type", "rotate"}}), std::invalid_argument);
  Json bad = kAscend;
  bad["children"] = Json::array();
  EXPECT_THROW(IsuFn::parse(bad), std::invalid_argument);
}

TEST(Predicate, Compare) {
  const auto p = Predicate::parse({{"type", "compare"}, {"lhs", "t"}, {"op", "<"}, {"rhs", "len"}});
  EXPECT_EQ(p.ports(), (std::vector<std::string>{"true", "false"}));
  EXPECT_EQ(p.route(State(1, {{"t", 2}, {"len", 3}})), 0u);
  EXPECT_EQ(p.route(State(1, {{"t", 3}, {"len", 3}})), 1u);
  EXPECT_THROW(p.route(State(1, {{"t", 3}})), ProtocolError);

  const auto q = Predicate::parse({{"type", "compare"}, {"lhs", "node"}, {"op", "=="}, {"rhs", {{"aux", "root"}}}});
  auto aux = std::make_shared<InstanceAux>();
  aux->set_scalar("root", 4);
  State s(1, {{"node", 4}});
  s.set_aux(aux);
  EXPECT_EQ(q.route(s), 0u);
  s.set("node", 3);
  EXPECT_EQ(q.route(s), 1u);
  EXPECT_THROW(Predicate::parse({{"type", "compare"}, {"lhs", "t"}, {"op", "<>"}, {"rhs", 1}}), std::invalid_argument);
}

TEST(Predicate, KeyModSwitchConstant) {
  const auto km = Predicate::parse({{"type", "key_mod"}, {"fields", Json::array({"id", "t"})}, {"k", 3}});
  EXPECT_EQ(km.ports().size(), 3u);
  EXPECT_EQ(km.route(State(4, {{"t", 1}})), 2u);
  EXPECT_EQ(km.route(State(-5, {{"t", 0}})), 1u);

  const auto sw = Predicate::parse({{"type", "switch"}, {"field", "etype"}, {"cases", 4}});
  EXPECT_EQ(sw.route(State(1, {{"etype", 3}})), 3u);
  EXPECT_THROW(sw.route(State(1, {{"etype", 4}})), ProtocolError);

  const auto c = Predicate::parse({{"type", "constant"}, {"ports", Json::array({"a", "b"})}, {"port", "b"}});
  EXPECT_EQ(c.route(State(1)), 1u);
  EXPECT_THROW(Predicate::parse({{"type", "constant"}, {"ports", Json::array({"a"})}, {"port", "z"}}),
               std::invalid_argument);
  EXPECT_THROW(Predicate::parse({{"type", "key_mod"}, {"fields", "id"}, {"k", 0}}), std::invalid_argument);
}

TEST(CountSpec, Variants) {
  auto aux = std::make_shared<InstanceAux>();
  aux->set_scalar("num_nodes", 6);
  aux->set_lists("in_edges", {{0, 1}, {2}, {}});
  State s(1, {{"dst", 0}, {"n", 9}});
  s.set_aux(aux);
  EXPECT_EQ(CountSpec::parse(2).eval(s), 2);
  EXPECT_EQ(CountSpec::parse({{"const", 3}}).eval(s), 3);
  EXPECT_EQ(CountSpec::parse({{"aux_scalar", "num_nodes"}}).eval(s), 6);
  EXPECT_EQ(CountSpec::parse({{"aux_list_size", "in_edges"}, {"index", "dst"}}).eval(s), 2);
  EXPECT_EQ(CountSpec::parse({{"field", "n"}}).eval(s), 9);
  EXPECT_THROW(CountSpec::parse(-1), std::invalid_argument);
  EXPECT_THROW(CountSpec::parse({{"bogus", 1}}), std::invalid_argument);
}

TEST(Expansion, ListAndTable) {
  auto aux = std::make_shared<InstanceAux>();
  aux->set_lists("edges_by_type", {{4, 7}, {5}});
  aux->set_table("edge_dst", {0, 0, 0, 0, 2, 3, 0, 1});
  const auto ex = Expansion::parse_list(Json::array({{{"field", "edge"}, {"list", "edges_by_type"}, {"index", "etype"}},
                                                     {{"field", "dst"}, {"table", "edge_dst"}, {"index", "edge"}}}));
  ASSERT_EQ(ex.size(), 2u);
  State s(1, {{"etype", 0}});
  s.set_aux(aux);
  ex[0].apply(s, 1);
  ex[1].apply(s, 1);
  EXPECT_EQ(s.get("edge"), 7);
  EXPECT_EQ(s.get("dst"), 1);
  EXPECT_THROW(ex[0].apply(s, 2), ProtocolError);
  EXPECT_TRUE(Expansion::parse_list(Json()).empty());
}

TEST(InstanceAux, MissingNamesThrow) {
  InstanceAux aux;
  aux.set_table("t", {1, 2});
  EXPECT_THROW(aux.scalar("x"), ProtocolError);
  EXPECT_THROW(aux.table("x"), ProtocolError);
  EXPECT_THROW(aux.table_at("t", 2), ProtocolError);
  EXPECT_THROW(aux.lists("x"), ProtocolError);
}
