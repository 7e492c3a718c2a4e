#include "ampnet/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ampnet {

double gradcheck_rel_err(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradcheckReport gradcheck(const IrGraph& graph, const std::vector<Instance>& data, const GradcheckOptions& opt) {
  if (sizeof(Scalar) != sizeof(double)) throw std::logic_error("gradcheck needs a double-precision build");
  if (data.empty()) throw std::invalid_argument("gradcheck needs at least one instance");
  if (!(opt.step > 0)) throw std::invalid_argument("gradcheck step must be positive");
  const auto t0 = std::chrono::steady_clock::now();

  TrainConfig cfg;
  cfg.threads = 1;
  cfg.max_active_keys = 1;
  cfg.min_update_frequency = std::numeric_limits<std::int64_t>::max();
  cfg.seed = opt.seed;
  Runtime rt(graph, cfg);

  auto total_loss = [&] {
    const auto r = rt.evaluate(data);
    return r.mean_loss * static_cast<double>(r.loss_records);
  };

  GradcheckReport report;
  report.loss = total_loss();
  rt.run(data, {false, false});

  std::mt19937_64 rng(opt.seed ^ 0x6772616463686b);
  for (const auto& id : graph.topological_ids()) {
    ParamBlock* block = rt.node(id).params();
    if (!block) continue;
    for (std::size_t p = 0; p < block->size(); ++p) {
      Tensor& w = block->weights[p];
      const Tensor analytic = block->grad_accum[p];
      std::vector<std::size_t> idx(w.size());
      std::iota(idx.begin(), idx.end(), 0);
      if (opt.max_per_tensor > 0 && idx.size() > opt.max_per_tensor) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(opt.max_per_tensor);
        std::sort(idx.begin(), idx.end());
      }

      GradcheckTensor t;
      t.node = id;
      t.param = block->names[p];
      for (std::size_t i : idx) {
        const Scalar orig = w[i];
        w[i] = orig + static_cast<Scalar>(opt.step);
        const double up = total_loss();
        w[i] = orig - static_cast<Scalar>(opt.step);
        const double down = total_loss();
        w[i] = orig;
        const double numeric = (up - down) / (2.0 * opt.step);
        const double err = gradcheck_rel_err(analytic[i], numeric, opt.floor);
        ++t.checked;
        if (err > t.max_rel_err || t.checked == 1) {
          t.max_rel_err = err;
          t.worst_index = i;
          t.worst_analytic = analytic[i];
          t.worst_numeric = numeric;
        }
      }
      t.passed = t.max_rel_err < opt.tolerance;
      report.max_rel_err = std::max(report.max_rel_err, t.max_rel_err);
      report.passed = report.passed && t.passed;
      report.tensors.push_back(std::move(t));
    }
  }
  rt.shutdown();
  report.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace ampnet
