#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ampnet/graph.hpp"
#include "ampnet/runtime.hpp"

namespace ampnet {

struct GradcheckOptions {
  /// Central difference half-step.
  double step = 1e-5;
  double tolerance = 1e-5;
  /// Lower bound on the relative-error denominator, so that gradients that
  /// are zero up to rounding do not divide by zero.
  double floor = 1e-4;
  std::uint64_t seed = 0;
  /// Entries checked per parameter tensor; 0 checks all of them.
  std::size_t max_per_tensor = 0;
};

struct GradcheckTensor {
  std::string node;
  std::string param;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckTensor> tensors;
  double max_rel_err = 0.0;
  double loss = 0.0;
  double wall_s = 0.0;
  bool passed = true;
};

/// Compares the gradient accumulated by one synchronous training pass over
/// `data` (summed over every loss record) against central differences of
/// the inference loss. Requires a double-precision build.
GradcheckReport gradcheck(const IrGraph& graph, const std::vector<Instance>& data, const GradcheckOptions& opt = {});

double gradcheck_rel_err(double analytic, double numeric, double floor);

}  // namespace ampnet
