// Control-flow nodes. None of them touch the payload.

#include "node_impl.hpp"

namespace ampnet::detail {

namespace {

/// Routes each forward message to the port chosen by a state predicate.
/// Backward is an unconditional pass-through to the single input.
class CondNode final : public Node {
 public:
  CondNode(const NodeSpec& spec, Predicate pred)
      : Node(spec.id, spec.kind, {"in"}, pred.ports()), pred_(std::move(pred)) {}

  void forward(std::size_t, Message msg, Emitter& out) override {
    const auto port = pred_.route(msg.state);
    out.forward(port, std::move(msg));
  }

  void backward(std::size_t, Message msg, Emitter& out) override { out.backward(0, std::move(msg)); }

 private:
  Predicate pred_;
};

/// Join point. Remembers which input each key arrived on so the gradient
/// can be sent back the same way.
class PhiNode final : public Node {
 public:
  PhiNode(const NodeSpec& spec, std::vector<std::string> inputs)
      : Node(spec.id, spec.kind, std::move(inputs), {"out"}),
        key_(key_from_config(spec.config)),
        origin_(&id(), "origin") {}

  void forward(std::size_t in_port, Message msg, Emitter& out) override {
    if (!msg.inference) origin_.insert(key_(msg.state), in_port);
    out.forward(0, std::move(msg));
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    const auto port = origin_.take(key_(msg.state), msg.state);
    out.backward(port, std::move(msg));
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    origin_.append_keys(out);
    return out;
  }
  void clear_caches() override { origin_.clear(); }

 private:
  KeyFn key_;
  KeyedCache<std::size_t> origin_;
};

/// Invertible state update: f on the way forward, f^-1 on the way back.
class IsuNode final : public Node {
 public:
  IsuNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"in"}, {"out"}),
        fn_(IsuFn::parse(spec.config.at("fn"))),
        check_(spec.config.value("check_inverse", false)) {}

  void forward(std::size_t, Message msg, Emitter& out) override {
    State next = fn_.apply(msg.state);
    if (check_) {
      const State back = fn_.invert(next);
      if (!(back == msg.state))
        throw ProtocolError("isu '" + id() + "': inverse check failed, " + msg.state.to_string() + " -> " +
                            next.to_string() + " -> " + back.to_string());
    }
    msg.state = std::move(next);
    out.forward(0, std::move(msg));
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    msg.state = fn_.invert(msg.state);
    out.backward(0, std::move(msg));
  }

 private:
  IsuFn fn_;
  bool check_;
};

std::vector<std::string> port_list(const Json& config, const char* name) {
  auto ports = config.at(name).get<std::vector<std::string>>();
  if (ports.empty()) throw std::invalid_argument(std::string("'") + name + "' must not be empty");
  return ports;
}

}  // namespace

std::unique_ptr<Node> make_control_node(const NodeSpec& spec) {
  if (spec.kind == "cond") return std::make_unique<CondNode>(spec, Predicate::parse(spec.config.at("predicate")));
  if (spec.kind == "phi") return std::make_unique<PhiNode>(spec, port_list(spec.config, "inputs"));
  if (spec.kind == "isu") return std::make_unique<IsuNode>(spec);
  return nullptr;
}

}  // namespace ampnet::detail
