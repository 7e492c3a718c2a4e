#include "ampnet/throughput.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ampnet {

ThroughputEstimate estimate_throughput(const ThroughputModel& m) {
  const std::pair<const char*, double> fields[] = {
      {"hidden", m.hidden},          {"nodes", m.nodes},       {"edges", m.edges},
      {"edge_types", m.edge_types},  {"steps", m.steps},       {"device_flops", m.device_flops},
      {"overhead", m.overhead},      {"bits_per_scalar", m.bits_per_scalar}};
  for (const auto& [name, v] : fields)
    if (!std::isfinite(v) || v <= 0) throw std::invalid_argument(std::string(name) + " must be finite and positive");

  const double h2 = m.hidden * m.hidden;
  ThroughputEstimate e;
  e.fwdop = 2.0 * std::max(2.0 * m.nodes * h2, m.edges * h2 / m.edge_types);
  e.bwdop = 3.0 * e.fwdop;
  e.samples_per_s = m.overhead * m.device_flops / ((e.fwdop + e.bwdop) * m.steps);
  e.bandwidth_bits_per_s = m.bits_per_scalar * e.samples_per_s * std::max(m.nodes, m.edges) * m.hidden;
  return e;
}

}  // namespace ampnet
