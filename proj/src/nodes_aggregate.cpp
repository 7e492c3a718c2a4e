// (Dis-)aggregation combinators: concat, split, bcast, group, ungroup, flatmap.

#include <algorithm>
#include <optional>

#include "node_impl.hpp"

namespace ampnet::detail {

namespace {

std::vector<std::string> port_list(const Json& config, const char* name) {
  auto ports = config.at(name).get<std::vector<std::string>>();
  if (ports.empty()) throw std::invalid_argument(std::string("'") + name + "' must not be empty");
  return ports;
}

std::vector<FieldId> field_ids(const Json& config, const char* name) {
  std::vector<FieldId> out;
  if (!config.contains(name)) return out;
  for (const auto& n : parse_name_list(config.at(name))) out.push_back(intern_field(n));
  return out;
}

/// Sums gradients that may be empty (an empty payload stands for "no gradient").
void add_gradient(Tensor& acc, const Tensor& g, const std::string& who) {
  if (g.empty()) return;
  if (acc.empty()) {
    acc = g;
    return;
  }
  if (!acc.same_shape(g))
    throw DimensionError("node '" + who + "': gradient shapes differ (" + acc.shape_str() + " vs " + g.shape_str() + ")");
  add_inplace(acc, g);
}

/// Joins one message per input port on a shared key and concatenates their
/// payloads column-wise. The outgoing state is the state of `state_from`.
class ConcatNode final : public Node {
 public:
  explicit ConcatNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, port_list(spec.config, "inputs"), {"out"}),
        key_(key_from_config(spec.config)),
        pending_(&id(), "join"),
        done_(&id(), "concat") {
    const auto from = spec.config.value("state_from", inputs().front());
    auto it = std::find(inputs().begin(), inputs().end(), from);
    if (it == inputs().end()) throw std::invalid_argument("concat: state_from '" + from + "' is not an input");
    state_from_ = static_cast<std::size_t>(it - inputs().begin());
  }

  void forward(std::size_t in_port, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending* p = pending_.find(k);
    if (!p) {
      p = &pending_.insert(k, {});
      p->parts.resize(inputs().size());
    }
    if (p->parts[in_port])
      throw DuplicateKeyError("concat '" + id() + "': second message on port '" + inputs()[in_port] + "' for key " +
                              k.to_string());
    p->parts[in_port] = std::move(msg);
    if (++p->arrived < inputs().size()) return;

    Pending full = pending_.take(k, State());
    std::vector<Tensor> payloads;
    Done d;
    bool inference = false;
    for (auto& part : full.parts) {
      payloads.push_back(std::move(part->payload));
      d.widths.push_back(payloads.back().cols());
      d.states.push_back(part->state);
      inference = inference || part->inference;
    }
    Message result = make_message(Direction::kForward, hconcat(payloads), d.states[state_from_], inference);
    if (!inference) done_.insert(key_(result.state), std::move(d));
    out.forward(0, std::move(result));
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    Done d = done_.take(key_(msg.state), msg.state);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < d.widths.size(); ++i) {
      Tensor part = msg.payload.empty() ? Tensor() : column_slice(msg.payload, offset, d.widths[i]);
      offset += d.widths[i];
      out.backward(i, make_message(Direction::kBackward, std::move(part), std::move(d.states[i])));
    }
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    done_.append_keys(out);
    return out;
  }
  void clear_caches() override {
    pending_.clear();
    done_.clear();
  }

 private:
  struct Pending {
    std::vector<std::optional<Message>> parts;
    std::size_t arrived = 0;
  };
  struct Done {
    std::vector<std::size_t> widths;
    std::vector<State> states;
  };

  KeyFn key_;
  std::size_t state_from_ = 0;
  KeyedCache<Pending> pending_;
  KeyedCache<Done> done_;
};

/// Partitions the payload columns into the declared output widths.
class SplitNode final : public Node {
 public:
  explicit SplitNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"in"}, port_list(spec.config, "outputs")),
        key_(key_from_config(spec.config)),
        sizes_(spec.config.at("sizes").get<std::vector<std::size_t>>()),
        pending_(&id(), "split") {
    if (sizes_.size() != outputs().size()) throw std::invalid_argument("split: 'sizes' must match 'outputs'");
  }

  void forward(std::size_t, Message msg, Emitter& out) override {
    std::size_t total = 0;
    for (auto s : sizes_) total += s;
    if (total != msg.payload.cols())
      throw DimensionError("split '" + id() + "': payload " + msg.payload.shape_str() + " does not match sizes");
    if (!msg.inference) pending_.insert(key_(msg.state), Pending{std::vector<Tensor>(sizes_.size()), 0, msg.payload.rows()});
    std::size_t offset = 0;
    for (std::size_t i = 0; i < sizes_.size(); ++i) {
      out.forward(i, make_message(Direction::kForward, column_slice(msg.payload, offset, sizes_[i]), msg.state,
                                  msg.inference));
      offset += sizes_[i];
    }
  }

  void backward(std::size_t out_port, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending& p = pending_.at(k, msg.state);
    p.grads[out_port] = msg.payload.empty() ? Tensor(p.rows, sizes_[out_port]) : std::move(msg.payload);
    if (++p.arrived < sizes_.size()) return;
    Pending full = pending_.take(k, msg.state);
    out.backward(0, make_message(Direction::kBackward, hconcat(full.grads), std::move(msg.state)));
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    return out;
  }
  void clear_caches() override { pending_.clear(); }

 private:
  struct Pending {
    std::vector<Tensor> grads;
    std::size_t arrived = 0;
    std::size_t rows = 0;
  };

  KeyFn key_;
  std::vector<std::size_t> sizes_;
  KeyedCache<Pending> pending_;
};

/// Copies each message to every output; backward sums the returning gradients.
class BcastNode final : public Node {
 public:
  explicit BcastNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"in"}, port_list(spec.config, "outputs")),
        key_(key_from_config(spec.config)),
        pending_(&id(), "bcast") {}

  void forward(std::size_t, Message msg, Emitter& out) override {
    if (!msg.inference) pending_.insert(key_(msg.state), {});
    for (std::size_t i = 0; i + 1 < outputs().size(); ++i) out.forward(i, msg);
    out.forward(outputs().size() - 1, std::move(msg));
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending& p = pending_.at(k, msg.state);
    add_gradient(p.sum, msg.payload, id());
    if (++p.arrived < outputs().size()) return;
    Pending full = pending_.take(k, msg.state);
    out.backward(0, make_message(Direction::kBackward, std::move(full.sum), std::move(msg.state)));
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    return out;
  }
  void clear_caches() override { pending_.clear(); }

 private:
  struct Pending {
    Tensor sum;
    std::size_t arrived = 0;
  };

  KeyFn key_;
  KeyedCache<Pending> pending_;
};

/// Collects `count` messages sharing a group key, orders them by `order_by`
/// and stacks their payloads row-wise. The merged state is the members'
/// common state with the `drop` fields removed.
class GroupNode final : public Node {
 public:
  explicit GroupNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"in"}, {"out"}),
        key_(key_from_config(spec.config)),
        count_(CountSpec::parse(spec.config.at("count"))),
        order_by_(field_ids(spec.config, "order_by")),
        drop_(field_ids(spec.config, "drop")),
        pending_(&id(), "group"),
        done_(&id(), "members") {
    for (auto f : key_.fields())
      if (std::find(drop_.begin(), drop_.end(), f) != drop_.end())
        throw std::invalid_argument("group: key field '" + field_name(f) + "' cannot be dropped");
  }

  void forward(std::size_t, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending* p = pending_.find(k);
    if (!p) {
      const auto expected = count_.eval(msg.state);
      if (expected < 1) throw ProtocolError("group '" + id() + "': expected member count " + std::to_string(expected));
      p = &pending_.insert(k, {});
      p->expected = static_cast<std::size_t>(expected);
    }
    p->inference = p->inference || msg.inference;
    p->members.push_back(std::move(msg));
    if (p->members.size() < p->expected) return;

    Pending full = pending_.take(k, State());
    auto& members = full.members;
    std::sort(members.begin(), members.end(), [this](const Message& a, const Message& b) {
      for (auto f : order_by_) {
        const auto x = a.state.get(f), y = b.state.get(f);
        if (x != y) return x < y;
      }
      return a.state < b.state;
    });

    State merged = members.front().state;
    for (auto f : drop_) merged.erase(f);
    Done d;
    std::vector<Tensor> payloads;
    for (auto& m : members) {
      State kept = m.state;
      for (auto f : drop_) kept.erase(f);
      if (!(kept == merged))
        throw ProtocolError("group '" + id() + "': members disagree on kept fields (" + kept.to_string() + " vs " +
                            merged.to_string() + ")");
      d.rows.push_back(m.payload.rows());
      d.states.push_back(std::move(m.state));
      payloads.push_back(std::move(m.payload));
    }
    Message result = make_message(Direction::kForward, vstack(payloads), merged, full.inference);
    if (!full.inference) done_.insert(k, std::move(d));
    out.forward(0, std::move(result));
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    Done d = done_.take(key_(msg.state), msg.state);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
      Tensor part = msg.payload.empty() ? Tensor() : row_slice(msg.payload, offset, d.rows[i]);
      offset += d.rows[i];
      out.backward(0, make_message(Direction::kBackward, std::move(part), std::move(d.states[i])));
    }
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    done_.append_keys(out);
    return out;
  }
  void clear_caches() override {
    pending_.clear();
    done_.clear();
  }

 private:
  struct Pending {
    std::vector<Message> members;
    std::size_t expected = 0;
    bool inference = false;
  };
  struct Done {
    std::vector<State> states;
    std::vector<std::size_t> rows;
  };

  KeyFn key_;
  CountSpec count_;
  std::vector<FieldId> order_by_;
  std::vector<FieldId> drop_;
  KeyedCache<Pending> pending_;
  KeyedCache<Done> done_;
};

/// Emits one message per payload row. Row i carries `index_field = i` plus
/// any expansions; backward restacks the row gradients.
class UngroupNode final : public Node {
 public:
  explicit UngroupNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"in"}, {"out"}),
        key_(key_from_config(spec.config)),
        index_(intern_field(spec.config.at("index_field").get<std::string>())),
        expansions_(Expansion::parse_list(spec.config.value("expansions", Json()))),
        pending_(&id(), "ungroup") {}

  void forward(std::size_t, Message msg, Emitter& out) override {
    const auto n = msg.payload.rows();
    if (!msg.inference) {
      Pending p;
      p.state = msg.state;
      p.rows.resize(n);
      p.cols = msg.payload.cols();
      pending_.insert(key_(msg.state), std::move(p));
    }
    for (std::size_t i = 0; i < n; ++i) {
      State s = msg.state;
      s.set(index_, static_cast<std::int64_t>(i));
      for (const auto& e : expansions_) e.apply(s, static_cast<std::int64_t>(i));
      out.forward(0, make_message(Direction::kForward, row_slice(msg.payload, i, 1), std::move(s), msg.inference));
    }
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending& p = pending_.at(k, msg.state);
    const auto i = msg.state.get(index_);
    if (i < 0 || static_cast<std::size_t>(i) >= p.rows.size() || p.rows[static_cast<std::size_t>(i)])
      throw ProtocolError("ungroup '" + id() + "': unexpected row gradient " + msg.state.to_string());
    p.rows[static_cast<std::size_t>(i)] = msg.payload.empty() ? Tensor(1, p.cols) : std::move(msg.payload);
    if (++p.arrived < p.rows.size()) return;
    Pending full = pending_.take(k, msg.state);
    std::vector<Tensor> rows;
    rows.reserve(full.rows.size());
    for (auto& r : full.rows) rows.push_back(std::move(*r));
    out.backward(0, make_message(Direction::kBackward, vstack(rows), std::move(full.state)));
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    return out;
  }
  void clear_caches() override { pending_.clear(); }

 private:
  struct Pending {
    State state;
    std::vector<std::optional<Tensor>> rows;
    std::size_t arrived = 0;
    std::size_t cols = 0;
  };

  KeyFn key_;
  FieldId index_;
  std::vector<Expansion> expansions_;
  KeyedCache<Pending> pending_;
};

/// Fans one message out to k copies with generated states. Generators:
///   {"list": "out_edges", "index": "node", "field": "edge"}  one copy per list element
///   {"range": <count spec>, "field": "j"}                     copies j = 0..k-1
/// Backward sums the k gradients and restores the incoming state.
class FlatmapNode final : public Node {
 public:
  explicit FlatmapNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"in"}, {"out"}),
        key_(key_from_config(spec.config)),
        expansions_(Expansion::parse_list(spec.config.value("expansions", Json()))),
        pending_(&id(), "flatmap") {
    const auto& gen = spec.config.at("generator");
    field_ = intern_field(gen.at("field").get<std::string>());
    if (gen.contains("list")) {
      list_ = gen.at("list").get<std::string>();
      list_index_ = intern_field(gen.at("index").get<std::string>());
    } else {
      range_ = CountSpec::parse(gen.at("range"));
    }
  }

  void forward(std::size_t, Message msg, Emitter& out) override {
    std::vector<std::int64_t> values;
    if (!list_.empty()) {
      if (!msg.state.aux()) throw ProtocolError("flatmap '" + id() + "': state carries no aux structure");
      values = msg.state.aux()->list_at(list_, msg.state.get(list_index_));
    } else {
      const auto k = range_.eval(msg.state);
      for (std::int64_t j = 0; j < k; ++j) values.push_back(j);
    }

    if (!msg.inference) {
      if (values.empty()) {
        out.backward(0, make_message(Direction::kBackward, Tensor(msg.payload.rows(), msg.payload.cols()), msg.state));
        return;
      }
      pending_.insert(key_(msg.state), Pending{msg.state, values.size(), 0, {}});
    }
    for (std::size_t j = 0; j < values.size(); ++j) {
      State s = msg.state;
      s.set(field_, values[j]);
      for (const auto& e : expansions_) e.apply(s, static_cast<std::int64_t>(j));
      out.forward(0, make_message(Direction::kForward, msg.payload, std::move(s), msg.inference));
    }
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending& p = pending_.at(k, msg.state);
    add_gradient(p.sum, msg.payload, id());
    if (++p.arrived < p.expected) return;
    Pending full = pending_.take(k, msg.state);
    out.backward(0, make_message(Direction::kBackward, std::move(full.sum), std::move(full.state)));
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    return out;
  }
  void clear_caches() override { pending_.clear(); }

 private:
  struct Pending {
    State state;
    std::size_t expected = 0;
    std::size_t arrived = 0;
    Tensor sum;
  };

  KeyFn key_;
  FieldId field_ = 0;
  std::string list_;
  FieldId list_index_ = 0;
  CountSpec range_;
  std::vector<Expansion> expansions_;
  KeyedCache<Pending> pending_;
};

}  // namespace

std::unique_ptr<Node> make_aggregate_node(const NodeSpec& spec) {
  if (spec.kind == "concat") return std::make_unique<ConcatNode>(spec);
  if (spec.kind == "split") return std::make_unique<SplitNode>(spec);
  if (spec.kind == "bcast") return std::make_unique<BcastNode>(spec);
  if (spec.kind == "group") return std::make_unique<GroupNode>(spec);
  if (spec.kind == "ungroup") return std::make_unique<UngroupNode>(spec);
  if (spec.kind == "flatmap") return std::make_unique<FlatmapNode>(spec);
  return nullptr;
}

}  // namespace ampnet::detail
