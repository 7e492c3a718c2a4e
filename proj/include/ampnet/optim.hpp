#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ampnet/tensor.hpp"

namespace ampnet {

enum class OptimizerKind { kSgd, kMomentum, kAdam };

OptimizerKind parse_optimizer_kind(const std::string& name);
const char* to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Learnable state of one PPT: weights, gradient accumulator and optimizer
/// slots. Owned by the worker hosting the node.
struct ParamBlock {
  std::vector<std::string> names;
  std::vector<Tensor> weights;
  std::vector<Tensor> grad_accum;
  /// Momentum velocity, or Adam first moment.
  std::vector<Tensor> slot1;
  /// Adam second moment.
  std::vector<Tensor> slot2;
  std::int64_t adam_step = 0;

  std::int64_t accum_count = 0;
  std::int64_t update_counter = 0;
  std::int64_t min_update_frequency = 1;
  std::int64_t nonfinite_skipped = 0;

  ParamBlock() = default;
  void add(std::string name, Tensor w);
  std::size_t size() const noexcept { return weights.size(); }
  std::size_t parameter_count() const noexcept;
  void zero_accumulator();
};

struct UpdateEvent {
  std::int64_t update_counter = 0;
  std::int64_t gradients = 0;
};

/// Applies one optimizer step using `grads` as the (already averaged) gradient.
void sgd_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg);
void momentum_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg);
void adam_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg);
void optimizer_step(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg);

/// Adds one gradient contribution. When the accumulator reaches the block's
/// min_update_frequency, applies an optimizer step on the mean gradient and
/// clears the accumulator. Non-finite contributions are dropped and counted.
std::optional<UpdateEvent> accumulate(ParamBlock& block, std::span<const Tensor> grads, const OptimizerConfig& cfg);

/// Applies any partial accumulator as a final smaller-mean update.
std::optional<UpdateEvent> flush(ParamBlock& block, const OptimizerConfig& cfg);

/// Staleness histogram of one PPT: staleness value -> backward event count.
struct StalenessHistogram {
  std::map<std::int64_t, std::int64_t> counts;

  void record(std::int64_t staleness) { ++counts[staleness]; }
  void merge(const StalenessHistogram& other);
  std::int64_t total() const noexcept;
  double mean() const noexcept;
  std::int64_t max() const noexcept;
};

}  // namespace ampnet
