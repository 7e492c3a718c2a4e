// Payload transforms: parameterized (linear, embedding, gru) and
// non-parameterized (activation, sum_rows, reshape). All of them key their
// activation cache on the message state and never modify the state.

#include <cmath>
#include <random>

#include "node_impl.hpp"

namespace ampnet::detail {

namespace {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = static_cast<Scalar>(dist(rng));
  return t;
}

std::size_t positive(const Json& config, const char* name) {
  const auto v = config.at(name).get<std::int64_t>();
  if (v <= 0) throw std::invalid_argument(std::string("'") + name + "' must be positive");
  return static_cast<std::size_t>(v);
}

class TransformNode : public Node {
 public:
  TransformNode(const NodeSpec& spec, const NodeContext& ctx)
      : Node(spec.id, spec.kind, {"in"}, {"out"}),
        key_(key_from_config(spec.config)),
        optimizer_(ctx.optimizer),
        input_grad_(spec.config.value("input_grad", true)),
        cache_(&id_ref(), "activation") {
    block_.min_update_frequency = spec.config.value("min_update_frequency", ctx.min_update_frequency);
    if (block_.min_update_frequency < 1) throw std::invalid_argument("min_update_frequency must be >= 1");
  }

  void forward(std::size_t, Message msg, Emitter& out) override {
    if (msg.inference) {
      std::vector<Tensor> scratch;
      msg.payload = compute_forward(msg.payload, scratch);
      out.forward(0, std::move(msg));
      return;
    }
    const Key k = key_(msg.state);
    if (cache_.contains(k)) cache_.insert(k, {});  // throws the duplicate-key diagnostic
    Entry e;
    e.update_counter = block_.update_counter;
    msg.payload = compute_forward(msg.payload, e.activation);
    cache_.insert(k, std::move(e));
    out.forward(0, std::move(msg));
  }

  void backward(std::size_t, Message msg, Emitter& out) override {
    Entry e = cache_.take(key_(msg.state), msg.state);
    std::vector<Tensor> grads;
    Tensor dx = compute_backward(e.activation, msg.payload, grads);
    if (block_.size() != 0) {
      staleness_.record(block_.update_counter - e.update_counter);
      accumulate(block_, grads, optimizer_);
    }
    msg.payload = input_grad_ ? std::move(dx) : Tensor();
    out.backward(0, std::move(msg));
  }

  std::vector<std::string> cached_keys() const override {
    std::vector<std::string> out;
    cache_.append_keys(out);
    return out;
  }
  void clear_caches() override { cache_.clear(); }

  ParamBlock* params() override { return block_.size() == 0 ? nullptr : &block_; }
  const StalenessHistogram* staleness() const override { return block_.size() == 0 ? nullptr : &staleness_; }
  void reset_staleness() override { staleness_ = {}; }
  void flush_updates() override {
    if (block_.size() != 0) flush(block_, optimizer_);
  }

 protected:
  /// Computes the output and fills `activation` with whatever the backward pass needs.
  virtual Tensor compute_forward(const Tensor& x, std::vector<Tensor>& activation) = 0;
  /// Returns the input gradient and fills `param_grads` (one per weight tensor).
  virtual Tensor compute_backward(const std::vector<Tensor>& activation, const Tensor& g,
                                  std::vector<Tensor>& param_grads) = 0;

  const std::string& id_ref() const { return id(); }

  ParamBlock block_;

 private:
  struct Entry {
    std::vector<Tensor> activation;
    std::int64_t update_counter = 0;
  };

  KeyFn key_;
  OptimizerConfig optimizer_;
  bool input_grad_;
  KeyedCache<Entry> cache_;
  StalenessHistogram staleness_;
};

/// y = x W + b
class LinearNode final : public TransformNode {
 public:
  LinearNode(const NodeSpec& spec, const NodeContext& ctx) : TransformNode(spec, ctx) {
    const auto in = positive(spec.config, "in");
    const auto out = positive(spec.config, "out");
    bias_ = spec.config.value("bias", true);
    std::mt19937_64 rng(node_seed(ctx.seed, spec));
    block_.add("W", glorot_uniform(in, out, rng));
    if (bias_) block_.add("b", Tensor(1, out));
  }

 protected:
  Tensor compute_forward(const Tensor& x, std::vector<Tensor>& act) override {
    Tensor y = matmul(x, block_.weights[0]);
    if (bias_) add_row_inplace(y, block_.weights[1]);
    act.push_back(x);
    return y;
  }

  Tensor compute_backward(const std::vector<Tensor>& act, const Tensor& g, std::vector<Tensor>& grads) override {
    const Tensor& x = act[0];
    grads.push_back(matmul_at(x, g));
    if (bias_) grads.push_back(sum_rows(g));
    return matmul_bt(g, block_.weights[0]);
  }

 private:
  bool bias_ = true;
};

/// Lookup table whose parameter is the embedding table. The payload is a
/// 1 x n row of token ids; the output has one embedding row per id.
class EmbeddingNode final : public TransformNode {
 public:
  EmbeddingNode(const NodeSpec& spec, const NodeContext& ctx) : TransformNode(spec, ctx) {
    const auto vocab = positive(spec.config, "vocab");
    const auto dim = positive(spec.config, "dim");
    std::mt19937_64 rng(node_seed(ctx.seed, spec));
    block_.add("table", glorot_uniform(vocab, dim, rng));
  }

 protected:
  Tensor compute_forward(const Tensor& ids, std::vector<Tensor>& act) override {
    const Tensor& table = block_.weights[0];
    Tensor out(ids.size(), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto row = index_of(ids[i], table.rows());
      std::copy_n(table.data() + row * table.cols(), table.cols(), out.data() + i * table.cols());
    }
    act.push_back(ids);
    return out;
  }

  Tensor compute_backward(const std::vector<Tensor>& act, const Tensor& g, std::vector<Tensor>& grads) override {
    const Tensor& ids = act[0];
    const Tensor& table = block_.weights[0];
    if (g.rows() != ids.size() || g.cols() != table.cols())
      throw DimensionError("embedding '" + id() + "': gradient shape " + g.shape_str() + " does not match lookup");
    Tensor d(table.rows(), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto row = index_of(ids[i], table.rows());
      for (std::size_t j = 0; j < table.cols(); ++j) d(row, j) += g(i, j);
    }
    grads.push_back(std::move(d));
    return Tensor(ids.rows(), ids.cols());
  }

 private:
  std::size_t index_of(Scalar v, std::size_t vocab) const {
    const auto r = std::llround(v);
    if (static_cast<Scalar>(r) != v || r < 0 || static_cast<std::size_t>(r) >= vocab)
      throw DimensionError("embedding '" + id() + "': token id " + std::to_string(v) + " outside vocabulary of " +
                           std::to_string(vocab));
    return static_cast<std::size_t>(r);
  }
};

/// Gated recurrent unit over a row batch. Input is [x | h] (n x 2H), output h' (n x H):
///   z = sigmoid([x,h] Wz + bz), r = sigmoid([x,h] Wr + br),
///   c = tanh([x, r*h] Wh + bh), h' = (1 - z) * h + z * c.
class GruNode final : public TransformNode {
 public:
  GruNode(const NodeSpec& spec, const NodeContext& ctx) : TransformNode(spec, ctx) {
    hidden_ = positive(spec.config, "hidden");
    std::mt19937_64 rng(node_seed(ctx.seed, spec));
    for (const char* gate : {"z", "r", "h"}) {
      block_.add(std::string("W") + gate, glorot_uniform(2 * hidden_, hidden_, rng));
      block_.add(std::string("b") + gate, Tensor(1, hidden_));
    }
  }

 protected:
  enum { kWz = 0, kBz, kWr, kBr, kWh, kBh };

  Tensor compute_forward(const Tensor& xh, std::vector<Tensor>& act) override {
    if (xh.cols() != 2 * hidden_)
      throw DimensionError("gru '" + id() + "': expected input width " + std::to_string(2 * hidden_) + ", got " +
                           xh.shape_str());
    const auto& w = block_.weights;
    Tensor az = matmul(xh, w[kWz]);
    add_row_inplace(az, w[kBz]);
    Tensor z = sigmoid(az);
    Tensor ar = matmul(xh, w[kWr]);
    add_row_inplace(ar, w[kBr]);
    Tensor r = sigmoid(ar);
    Tensor x = column_slice(xh, 0, hidden_);
    Tensor h = column_slice(xh, hidden_, hidden_);
    Tensor rh = mul(r, h);
    const Tensor parts[] = {x, rh};
    Tensor u = hconcat(parts);
    Tensor ah = matmul(u, w[kWh]);
    add_row_inplace(ah, w[kBh]);
    Tensor c = tanh(ah);
    Tensor out(h.rows(), hidden_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (Scalar(1) - z[i]) * h[i] + z[i] * c[i];
    act = {xh, z, r, u, c};
    return out;
  }

  Tensor compute_backward(const std::vector<Tensor>& act, const Tensor& g, std::vector<Tensor>& grads) override {
    const Tensor& xh = act[0];
    const Tensor& z = act[1];
    const Tensor& r = act[2];
    const Tensor& u = act[3];
    const Tensor& c = act[4];
    if (!g.same_shape(z)) throw DimensionError("gru '" + id() + "': gradient shape " + g.shape_str());
    const auto& w = block_.weights;
    const Tensor h = column_slice(xh, hidden_, hidden_);

    Tensor daz(g.rows(), hidden_), dah(g.rows(), hidden_), dh(g.rows(), hidden_);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar dz = g[i] * (c[i] - h[i]);
      const Scalar dc = g[i] * z[i];
      daz[i] = dz * z[i] * (Scalar(1) - z[i]);
      dah[i] = dc * (Scalar(1) - c[i] * c[i]);
      dh[i] = g[i] * (Scalar(1) - z[i]);
    }
    Tensor du = matmul_bt(dah, w[kWh]);
    Tensor drh = column_slice(du, hidden_, hidden_);
    Tensor dar(g.rows(), hidden_);
    for (std::size_t i = 0; i < g.size(); ++i) {
      dar[i] = drh[i] * h[i] * r[i] * (Scalar(1) - r[i]);
      dh[i] += drh[i] * r[i];
    }
    Tensor dxh = matmul_bt(daz, w[kWz]);
    add_inplace(dxh, matmul_bt(dar, w[kWr]));
    for (std::size_t i = 0; i < dxh.rows(); ++i) {
      for (std::size_t j = 0; j < hidden_; ++j) {
        dxh(i, j) += du(i, j);
        dxh(i, hidden_ + j) += dh(i, j);
      }
    }
    grads.push_back(matmul_at(xh, daz));
    grads.push_back(sum_rows(daz));
    grads.push_back(matmul_at(xh, dar));
    grads.push_back(sum_rows(dar));
    grads.push_back(matmul_at(u, dah));
    grads.push_back(sum_rows(dah));
    return dxh;
  }

 private:
  std::size_t hidden_ = 0;
};

class ActivationNode final : public TransformNode {
 public:
  ActivationNode(const NodeSpec& spec, const NodeContext& ctx) : TransformNode(spec, ctx) {
    const auto fn = spec.config.value("fn", std::string("relu"));
    if (fn == "relu") fn_ = Fn::kRelu;
    else if (fn == "sigmoid") fn_ = Fn::kSigmoid;
    else if (fn == "tanh") fn_ = Fn::kTanh;
    else throw std::invalid_argument("activation: unknown fn '" + fn + "'");
  }

 protected:
  Tensor compute_forward(const Tensor& x, std::vector<Tensor>& act) override {
    act.push_back(x);
    switch (fn_) {
      case Fn::kRelu: return relu(x);
      case Fn::kSigmoid: return sigmoid(x);
      case Fn::kTanh: return tanh(x);
    }
    return x;
  }

  Tensor compute_backward(const std::vector<Tensor>& act, const Tensor& g, std::vector<Tensor>&) override {
    switch (fn_) {
      case Fn::kRelu: return relu_backward(act[0], g);
      case Fn::kSigmoid: return sigmoid_backward(act[0], g);
      case Fn::kTanh: return tanh_backward(act[0], g);
    }
    return g;
  }

 private:
  enum class Fn { kRelu, kSigmoid, kTanh } fn_ = Fn::kRelu;
};

/// Sums the rows of the payload into a single row.
class SumRowsNode final : public TransformNode {
 public:
  using TransformNode::TransformNode;

 protected:
  Tensor compute_forward(const Tensor& x, std::vector<Tensor>& act) override {
    act.push_back(Tensor(1, 1, static_cast<Scalar>(x.rows())));
    return sum_rows(x);
  }

  Tensor compute_backward(const std::vector<Tensor>& act, const Tensor& g, std::vector<Tensor>&) override {
    const auto n = static_cast<std::size_t>(act[0][0]);
    Tensor dx(n, g.cols());
    for (std::size_t i = 0; i < n; ++i) std::copy_n(g.data(), g.cols(), dx.data() + i * g.cols());
    return dx;
  }
};

/// Flattens the payload into one row (`"to": "row"`) or one column (`"to": "column"`).
class ReshapeNode final : public TransformNode {
 public:
  ReshapeNode(const NodeSpec& spec, const NodeContext& ctx) : TransformNode(spec, ctx) {
    const auto to = spec.config.value("to", std::string("row"));
    if (to != "row" && to != "column") throw std::invalid_argument("reshape: 'to' must be row or column");
    to_row_ = to == "row";
  }

 protected:
  Tensor compute_forward(const Tensor& x, std::vector<Tensor>& act) override {
    act.push_back(Tensor(1, 2, std::vector<Scalar>{static_cast<Scalar>(x.rows()), static_cast<Scalar>(x.cols())}));
    return to_row_ ? reshape(x, 1, x.size()) : reshape(x, x.size(), 1);
  }

  Tensor compute_backward(const std::vector<Tensor>& act, const Tensor& g, std::vector<Tensor>&) override {
    return reshape(g, static_cast<std::size_t>(act[0][0]), static_cast<std::size_t>(act[0][1]));
  }

 private:
  bool to_row_ = true;
};

}  // namespace

std::unique_ptr<Node> make_transform_node(const NodeSpec& spec, const NodeContext& ctx) {
  if (spec.kind == "linear") return std::make_unique<LinearNode>(spec, ctx);
  if (spec.kind == "embedding") return std::make_unique<EmbeddingNode>(spec, ctx);
  if (spec.kind == "gru") return std::make_unique<GruNode>(spec, ctx);
  if (spec.kind == "activation") return std::make_unique<ActivationNode>(spec, ctx);
  if (spec.kind == "sum_rows") return std::make_unique<SumRowsNode>(spec, ctx);
  if (spec.kind == "reshape") return std::make_unique<ReshapeNode>(spec, ctx);
  return nullptr;
}

}  // namespace ampnet::detail
