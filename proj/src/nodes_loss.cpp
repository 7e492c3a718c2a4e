// Loss node: joins a prediction with its label, reports the scalar loss and
// starts the backward pass.

#include <cmath>
#include <optional>

#include "node_impl.hpp"

namespace ampnet::detail {

namespace {

class LossNode final : public Node {
 public:
  explicit LossNode(const NodeSpec& spec)
      : Node(spec.id, spec.kind, {"pred", "label"}, {}), key_(key_from_config(spec.config)), pending_(&id(), "label") {
    const auto kind = spec.config.value("loss", std::string("softmax_ce"));
    if (kind == "softmax_ce") softmax_ = true;
    else if (kind == "squared_error") softmax_ = false;
    else throw std::invalid_argument("loss: unknown loss '" + kind + "'");
  }

  void forward(std::size_t in_port, Message msg, Emitter& out) override {
    const Key k = key_(msg.state);
    Pending* p = pending_.find(k);
    if (!p) p = &pending_.insert(k, {});
    auto& slot = in_port == 0 ? p->pred : p->label;
    if (slot)
      throw DuplicateKeyError("loss '" + id() + "': " + (in_port == 0 ? "prediction" : "label") +
                              " arrived twice for key " + k.to_string());
    slot = std::move(msg);
    if (!p->pred || !p->label) return;

    Pending full = pending_.take(k, State());
    Message& pred = *full.pred;
    const Tensor& label = full.label->payload;
    Tensor grad;
    LossRecord rec;
    rec.instance_id = pred.state.instance_id();
    rec.inference = pred.inference;
    if (softmax_) evaluate_softmax(pred.payload, label, grad, rec);
    else evaluate_squared(pred.payload, label, grad, rec);
    out.report(rec);
    if (!pred.inference) out.backward(0, make_message(Direction::kBackward, std::move(grad), std::move(pred.state)));
  }

  void backward(std::size_t, Message, Emitter&) override {
    throw ProtocolError("loss '" + id() + "' has no outputs and cannot receive gradients");
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    pending_.append_keys(out);
    return out;
  }
  void clear_caches() override { pending_.clear(); }

 private:
  struct Pending {
    std::optional<Message> pred;
    std::optional<Message> label;
  };

  // One class index per logits row.
  void evaluate_softmax(const Tensor& logits, const Tensor& label, Tensor& grad, LossRecord& rec) const {
    if (label.size() != logits.rows())
      throw DimensionError("loss '" + id() + "': " + std::to_string(logits.rows()) + " logit rows but " +
                           std::to_string(label.size()) + " labels");
    grad = softmax_rows(logits);
    rec.correct = true;
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const auto y = std::llround(label[i]);
      if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
        throw DimensionError("loss '" + id() + "': class " + std::to_string(y) + " out of range");
      const auto c = static_cast<std::size_t>(y);
      // log-sum-exp form keeps the loss finite for confident wrong predictions
      Scalar mx = logits(i, 0);
      std::size_t arg = 0;
      for (std::size_t j = 1; j < logits.cols(); ++j)
        if (logits(i, j) > mx) {
          mx = logits(i, j);
          arg = j;
        }
      double z = 0.0;
      for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(static_cast<double>(logits(i, j) - mx));
      loss += std::log(z) - static_cast<double>(logits(i, c) - mx);
      grad(i, c) -= Scalar(1);
      if (arg != c) rec.correct = false;
    }
    rec.loss = loss;
  }

  void evaluate_squared(const Tensor& pred, const Tensor& label, Tensor& grad, LossRecord& rec) const {
    if (!pred.same_shape(label))
      throw DimensionError("loss '" + id() + "': prediction " + pred.shape_str() + " vs label " + label.shape_str());
    grad = Tensor(pred.rows(), pred.cols());
    rec.correct = true;
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const Scalar d = pred[i] - label[i];
      loss += static_cast<double>(d) * static_cast<double>(d);
      grad[i] = Scalar(2) * d;
      if (std::abs(d) >= Scalar(0.5)) rec.correct = false;
    }
    rec.loss = loss;
  }

  KeyFn key_;
  bool softmax_ = true;
  KeyedCache<Pending> pending_;
};

}  // namespace

std::unique_ptr<Node> make_loss_node(const NodeSpec& spec) {
  if (spec.kind == "loss") return std::make_unique<LossNode>(spec);
  return nullptr;
}

}  // namespace ampnet::detail
