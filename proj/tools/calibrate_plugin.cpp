// Runs the plug-in TC estimator on the 2-bit independent coupling with the
// default protocol (5000 roots x 10 samples) for 20 seeds and prints the
// spread. The acceptance band is frozen from this output.
#include <cmath>
#include <cstdio>
#include <vector>

#include "redi/analysis.hpp"
#include "redi/rectify.hpp"

int main() {
  using namespace redi;
  const auto pi0 = build_fig1(Fig1Coupling::pi0);
  std::vector<double> values;
  for (std::uint64_t seed = 1001; seed <= 1020; ++seed) {
    PluginOptions o;
    o.rng = RngSpec{seed, "calibrate", 0};
    const auto r = conditional_tc_plugin(pi0, 0.0, 1.0, AlphaSchedule::linear(),
                                         PathMode::coordinatewise, o);
    values.push_back(r.value_nats);
    std::printf("seed=%llu tc=%.17g\n", static_cast<unsigned long long>(seed), r.value_nats);
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size() - 1));
  double lo = values.front(), hi = values.front();
  for (double v : values) lo = std::min(lo, v), hi = std::max(hi, v);
  std::printf("mean=%.17g sd=%.17g min=%.17g max=%.17g ln2=%.17g\n", mean, sd, lo, hi, std::log(2.0));
  std::printf("band(mean +- 5 sd)=[%.6f, %.6f]\n", mean - 5 * sd, mean + 5 * sd);
}
