#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ampnet/throughput.hpp"

using namespace ampnet;

namespace {

// Agreement to two significant figures: within half a unit of the second
// figure of the published value.
bool agrees_to_2sf(double value, double published) {
  const double unit = std::pow(10.0, std::floor(std::log10(std::abs(published))) - 1);
  return std::abs(value - published) <= 0.5 * unit * (1 + 1e-12);
}

}  // namespace

TEST(Throughput, DefaultGraphNetworkMatchesPublishedEstimate) {
  const auto e = estimate_throughput({});
  EXPECT_TRUE(agrees_to_2sf(e.samples_per_s, 6.5e3)) << e.samples_per_s;
  EXPECT_TRUE(agrees_to_2sf(e.bandwidth_bits_per_s, 1.2e9)) << e.bandwidth_bits_per_s;
}

TEST(Throughput, HandComputedDefaults) {
  // N=30, H=200: 2*N*H^2 = 2.4e6 beats E*H^2/C = 3e5, so fwdop = 4.8e6.
  const long double fwd = 2.0L * 2 * 30 * 200 * 200;
  const long double bwd = 3 * fwd;
  const long double sps = 0.5L * 1e12L / ((fwd + bwd) * 4);
  const auto e = estimate_throughput({});
  EXPECT_DOUBLE_EQ(e.fwdop, static_cast<double>(fwd));
  EXPECT_DOUBLE_EQ(e.bwdop, static_cast<double>(bwd));
  EXPECT_NEAR(e.samples_per_s, static_cast<double>(sps), 1e-9);
  EXPECT_NEAR(e.bandwidth_bits_per_s, static_cast<double>(32 * sps * 30 * 200), 1e-3);
}

TEST(Throughput, UnitGraph) {
  ThroughputModel m;
  m.hidden = m.nodes = m.edges = m.edge_types = m.steps = 1;
  const auto e = estimate_throughput(m);
  EXPECT_DOUBLE_EQ(e.fwdop, 4);
  EXPECT_DOUBLE_EQ(e.bwdop, 12);
}

TEST(Throughput, EdgeTermDominatesDenseGraphs) {
  ThroughputModel m;
  m.nodes = 10;
  m.edges = 100;
  m.edge_types = 1;
  m.hidden = 2;
  const auto e = estimate_throughput(m);
  EXPECT_DOUBLE_EQ(e.fwdop, 2 * 100 * 4);
  EXPECT_NEAR(e.bandwidth_bits_per_s, 32 * e.samples_per_s * 100 * 2, 1e-6 * e.bandwidth_bits_per_s);
}

TEST(Throughput, RejectsNonPositiveOrNonFinite) {
  for (double bad : {0.0, -1.0, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::quiet_NaN()}) {
    ThroughputModel m;
    m.hidden = bad;
    EXPECT_THROW(estimate_throughput(m), std::invalid_argument) << bad;
    m = {};
    m.overhead = bad;
    EXPECT_THROW(estimate_throughput(m), std::invalid_argument) << bad;
  }
}
