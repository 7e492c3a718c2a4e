#include "ampnet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ampnet {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd, momentum or adam)");
}

const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "?";
}

void ParamBlock::add(std::string name, Tensor w) {
  names.push_back(std::move(name));
  grad_accum.emplace_back(w.rows(), w.cols());
  slot1.emplace_back(w.rows(), w.cols());
  slot2.emplace_back(w.rows(), w.cols());
  weights.push_back(std::move(w));
}

std::size_t ParamBlock::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  return n;
}

void ParamBlock::zero_accumulator() {
  for (auto& g : grad_accum) g.fill(0);
  accum_count = 0;
}

namespace {

void check_grads(const ParamBlock& block, std::span<const Tensor> grads) {
  if (grads.size() != block.weights.size())
    throw DimensionError("gradient count " + std::to_string(grads.size()) + " does not match parameter count " +
                         std::to_string(block.weights.size()));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(block.weights[i]))
      throw DimensionError("gradient for '" + block.names[i] + "' has shape " + grads[i].shape_str() +
                           ", expected " + block.weights[i].shape_str());
  }
}

}  // namespace

void sgd_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg) {
  const auto lr = static_cast<Scalar>(cfg.lr);
  for (std::size_t p = 0; p < grads.size(); ++p) {
    Scalar* w = block.weights[p].data();
    const Scalar* g = grads[p].data();
    for (std::size_t i = 0; i < grads[p].size(); ++i) w[i] -= lr * g[i];
  }
}

// Velocity accumulates raw gradients: v <- mu * v + g; w <- w - lr * v.
void momentum_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg) {
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto mu = static_cast<Scalar>(cfg.momentum);
  for (std::size_t p = 0; p < grads.size(); ++p) {
    Scalar* w = block.weights[p].data();
    Scalar* v = block.slot1[p].data();
    const Scalar* g = grads[p].data();
    for (std::size_t i = 0; i < grads[p].size(); ++i) {
      v[i] = mu * v[i] + g[i];
      w[i] -= lr * v[i];
    }
  }
}

void adam_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg) {
  ++block.adam_step;
  const double t = static_cast<double>(block.adam_step);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(cfg.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(cfg.beta2, t));
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto eps = static_cast<Scalar>(cfg.epsilon);
  for (std::size_t p = 0; p < grads.size(); ++p) {
    Scalar* w = block.weights[p].data();
    Scalar* m = block.slot1[p].data();
    Scalar* v = block.slot2[p].data();
    const Scalar* g = grads[p].data();
    for (std::size_t i = 0; i < grads[p].size(); ++i) {
      m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
      v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i] * g[i];
      const Scalar mhat = m[i] / c1;
      const Scalar vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void optimizer_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg) {
  switch (cfg.kind) {
    case OptimizerKind::kSgd: sgd_step(block, grads, cfg); break;
    case OptimizerKind::kMomentum: momentum_step(block, grads, cfg); break;
    case OptimizerKind::kAdam: adam_step(block, grads, cfg); break;
  }
}

namespace {

UpdateEvent apply_mean_update(ParamBlock& block, const OptimizerConfig& cfg) {
  const auto n = static_cast<Scalar>(block.accum_count);
  for (auto& g : block.grad_accum)
    for (auto& v : g.values()) v /= n;
  optimizer_step(block, block.grad_accum, cfg);
  UpdateEvent ev{++block.update_counter, block.accum_count};
  block.zero_accumulator();
  return ev;
}

}  // namespace

std::optional<UpdateEvent> accumulate(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg) {
  check_grads(block, grads);
  for (const auto& g : grads) {
    if (!g.all_finite()) {
      ++block.nonfinite_skipped;
      return std::nullopt;
    }
  }
  for (std::size_t p = 0; p < grads.size(); ++p) {
    Scalar* acc = block.grad_accum[p].data();
    const Scalar* g = grads[p].data();
    for (std::size_t i = 0; i < grads[p].size(); ++i) acc[i] += g[i];
  }
  ++block.accum_count;
  if (block.accum_count >= block.min_update_frequency) return apply_mean_update(block, cfg);
  return std::nullopt;
}

std::optional<UpdateEvent> flush(ParamBlock& block, const OptimizerConfig& cfg) {
  if (block.accum_count == 0) return std::nullopt;
  return apply_mean_update(block, cfg);
}

void StalenessHistogram::merge(const StalenessHistogram& other) {
  for (const auto& [s, c] : other.counts) counts[s] += c;
}

std::int64_t StalenessHistogram::total() const noexcept {
  std::int64_t t = 0;
  for (const auto& [s, c] : counts) t += c;
  return t;
}

double StalenessHistogram::mean() const noexcept {
  const auto t = total();
  if (t == 0) return 0.0;
  double sum = 0;
  for (const auto& [s, c] : counts) sum += static_cast<double>(s) * static_cast<double>(c);
  return sum / static_cast<double>(t);
}

std::int64_t StalenessHistogram::max() const noexcept { return counts.empty() ? 0 : counts.rbegin()->first; }

}  // namespace ampnet
