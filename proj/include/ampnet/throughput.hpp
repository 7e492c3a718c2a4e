#pragma once

namespace ampnet {

/// Analytic cost model of one graph-network training step.
struct ThroughputModel {
  double hidden = 200;
  double nodes = 30;
  double edges = 30;
  double edge_types = 4;
  double steps = 4;
  double device_flops = 1e12;
  double overhead = 0.5;
  double bits_per_scalar = 32;
};

struct ThroughputEstimate {
  double fwdop = 0;
  double bwdop = 0;
  double samples_per_s = 0;
  double bandwidth_bits_per_s = 0;
};

/// fwdop = 2 max(2 N H^2, E H^2 / C), bwdop = 3 fwdop,
/// samples/s = overhead * flops / ((fwdop + bwdop) * steps),
/// bandwidth = bits * samples/s * max(N, E) * H.
/// Throws std::invalid_argument unless every field is finite and positive.
ThroughputEstimate estimate_throughput(const ThroughputModel& m);

}  // namespace ampnet
