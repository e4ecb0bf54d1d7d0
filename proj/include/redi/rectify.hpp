#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "redi/analysis.hpp"
#include "redi/core.hpp"
#include "redi/flow.hpp"
#include "redi/rng.hpp"

namespace redi {

struct ExactMethod {};
struct SampledMethod {
  std::uint64_t pairs = 50000;
};
using RectifyMethod = std::variant<ExactMethod, SampledMethod>;

std::string describe(const RectifyMethod& m);  // "exact" or "sampled(P)"

struct RectifyConfig {
  TimeGrid grid = TimeGrid::uniform(16);
  SamplerOptions sampler{};
  RectifyMethod method = ExactMethod{};
  RngSpec rng{};
};

/// pi_{k+1}(x0, x1) = p(x0) p_theta(x1 | x0), with p_theta the exact law of
/// the multi-step sampler induced by c. The source marginal is preserved.
PairCoupling rectify_exact(const PairCoupling& c, const RectifyConfig& cfg);

/// Same map, estimated from P (x0, x1) pairs: x0 drawn from the source
/// marginal with replacement, x1 from one sampled trajectory. Pair j uses
/// its own RNG stream, so the result does not depend on thread count.
PairCoupling rectify_sampled(const PairCoupling& c, const RectifyConfig& cfg);

PairCoupling rectify(const PairCoupling& c, const RectifyConfig& cfg);

/// Where and how TC is recorded along a run.
struct TcProbe {
  double t = 0.0;
  double s = 1.0;
  std::uint64_t support_cap = 1'000'000;
  /// Used only when the exact value is infeasible.
  PluginOptions plugin{};
};

struct RediRun {
  std::vector<PairCoupling> couplings;  // pi_0 ... pi_K
  std::vector<double> tc_curve;         // one value per coupling
  std::vector<TcMethod> tc_methods;
  std::vector<RectifyConfig> configs;   // one per iteration
};

/// Applies rectification K times. `configs` holds either one config reused
/// for every iteration or exactly K configs.
RediRun redi_iterate(const PairCoupling& c0, int iterations,
                     std::span<const RectifyConfig> configs, const TcProbe& probe = {});

/// Factorized one-step model: for every source state, the per-dimension
/// marginals of pi(x1 | x0). This is what a factorized model trained only on
/// the 0 -> 1 transition converges to.
struct OneStepModel {
  SparseDistribution source;
  std::map<SequenceState, FactorizedKernel> rows;
};

OneStepModel one_step_model(const PairCoupling& c);

/// Exact law of X1 under the one-step model.
SparseDistribution one_step_law(const OneStepModel& model,
                                std::uint64_t cap = kDefaultDenseCap);

std::vector<SequenceState> sample_one_step(const OneStepModel& model, std::uint64_t n,
                                           const RngSpec& rng, double tau = 1.0,
                                           int threads = 1);

// ---------------------------------------------------------------------------
// Builders

PairCoupling build_independent(const SparseDistribution& p0, const SparseDistribution& q1);

/// The 2-bit example: source uniform over {00, 01, 10, 11}, target uniform
/// over {00, 11}. pi0 is the independent coupling; pi1 is the deterministic
/// pairing {00->00, 01->11, 10->00, 11->11}.
enum class Fig1Coupling { pi0, pi1 };
PairCoupling build_fig1(Fig1Coupling which);
SparseDistribution fig1_source();
SparseDistribution fig1_target();

/// (1 - r) * uniform over all d^n states + r * point mass at the all-mask state.
SparseDistribution masked_source(const StateSpace& space, double r,
                                 std::uint64_t dense_cap = kDefaultDenseCap);

/// Independent coupling of masked_source(space, r) with q1.
PairCoupling build_masked_source(const StateSpace& space, double r, const SparseDistribution& q1,
                                 std::uint64_t dense_cap = kDefaultDenseCap);

/// support_size distinct (x0, x1) pairs chosen uniformly, with weights drawn
/// uniformly from (0, 1] and normalized.
PairCoupling build_random(const StateSpace& space, std::uint64_t support_size, const RngSpec& rng);

// ---------------------------------------------------------------------------
// Monotonicity battery

struct BatteryConfig {
  std::size_t couplings = 120;
  std::vector<int> steps{1, 2, 4};
  int iterations = 4;
  std::uint64_t seed = 20251016;
  double tolerance = 1e-9;
  SamplerOptions sampler{};
};

/// Random couplings cycling through (n, d) in {(2,2), (2,3), (3,2), (3,3)}.
std::vector<PairCoupling> random_battery(std::size_t count, std::uint64_t seed);

struct MonotonicityViolation {
  std::size_t coupling_index = 0;
  int steps = 0;
  int iteration = 0;  // the step pi_k -> pi_{k+1} has iteration = k
  double tc_before = 0.0;
  double tc_after = 0.0;
  PairCoupling before;
};

struct BatteryResult {
  std::size_t runs = 0;
  std::size_t transitions_checked = 0;
  double max_increase = 0.0;   // max over steps of tc[k+1] - tc[k]
  double max_one_step_tc = 0.0;  // max TC after an M = 1 rectification
  std::vector<MonotonicityViolation> violations;
};

BatteryResult run_monotonicity_battery(const BatteryConfig& cfg);

/// Machine-readable report: a summary line, then one block per violation
/// carrying the offending coupling in coupling-file form.
void write_counterexamples(std::ostream& out, const BatteryConfig& cfg, const BatteryResult& r);

}  // namespace redi
