#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "redi/core.hpp"
#include "redi/flow.hpp"
#include "redi/rng.hpp"

namespace redi {

/// KL(p || q) in nats. Without smoothing, q must cover p's support or a
/// DivergenceError naming the offending state is thrown. With smoothing eps,
/// q is replaced by (1 - eps) q + eps * uniform over the whole space.
double kl(const SparseDistribution& p, const SparseDistribution& q,
          std::optional<double> smoothing = std::nullopt);
double kl(const DenseDistribution& p, const DenseDistribution& q,
          std::optional<double> smoothing = std::nullopt);

/// 0.5 * sum |p - q|
double tv(const SparseDistribution& p, const SparseDistribution& q);
double tv(const DenseDistribution& p, const DenseDistribution& q);

/// KL of a joint from the product of its own per-dimension marginals.
double total_correlation(const SparseDistribution& joint);

/// p_t(x_t) = sum over pairs of pi(x0, x1) p_t(x_t | x0, x1). Throws CapError
/// when the support grows past `support_cap`.
SparseDistribution path_marginal(const PairCoupling& c, double t, const AlphaSchedule& schedule,
                                 PathMode mode, std::uint64_t support_cap = 1'000'000);

enum class TcMethod { exact, plugin };
std::string to_string(TcMethod m);

struct TCReport {
  double t = 0.0;
  double s = 1.0;
  double value_nats = 0.0;
  TcMethod method = TcMethod::exact;
  std::uint64_t roots = 0;             // plugin; exact: conditioning states enumerated
  std::uint64_t samples_per_root = 0;  // plugin
  std::optional<RngSpec> seed;         // plugin
  bool truncated = false;              // exact; never set silently
};

/// E_{x_t ~ p_t} KL( p_{s|t}(. | x_t) || prod_i p_{s|t}(x_s^i | x_t) ).
TCReport conditional_tc_exact(const PairCoupling& c, double t, double s,
                              const AlphaSchedule& schedule, PathMode mode,
                              std::uint64_t support_cap = 1'000'000);

/// The same quantity at (t, s) = (0, 1) as one KL divergence of the
/// coupling from p(X0) prod_i p(X1^i | X0). Independent of the transition
/// machinery; used as a cross-check.
double conditional_tc_single_kl(const PairCoupling& c);

struct PluginOptions {
  std::uint64_t roots = 5000;
  std::uint64_t samples_per_root = 10;
  RngSpec rng{};
  /// Condition every root on this state instead of drawing from p_t.
  std::optional<SequenceState> forced_root;
  int threads = 1;
};

/// Frequency-based estimate: for each root x_t ~ p_t, draw samples of X_s
/// from the exact transition and take the plug-in KL between their empirical
/// joint and the product of empirical per-dimension marginals. Averaged over
/// roots. Raw frequencies, no bias correction.
TCReport conditional_tc_plugin(const PairCoupling& c, double t, double s,
                               const AlphaSchedule& schedule, PathMode mode,
                               const PluginOptions& options);

/// Plug-in total correlation of a sample set.
double plugin_total_correlation(const StateSpace& space, std::span<const SequenceState> samples);

struct EvalReport {
  double tv_to_target = 0.0;
  double kl_target_generated = 0.0;  // KL(target || generated), generated side smoothed
  double support_coverage = 0.0;
  int steps = 0;
  std::optional<RngSpec> seed;  // monte-carlo only
};

struct EvalSampler {
  enum class Kind { exact_compose, monte_carlo };
  Kind kind = Kind::exact_compose;
  std::uint64_t n = 0;

  static EvalSampler exact() { return {Kind::exact_compose, 0}; }
  static EvalSampler monte_carlo(std::uint64_t n) { return {Kind::monte_carlo, n}; }
};

inline constexpr double kDefaultKlSmoothing = 1e-9;

/// Law of X1 produced by the multi-step sampler from the source marginal.
SparseDistribution generated_law(const PairCoupling& c, const TimeGrid& grid,
                                 const SamplerOptions& options, const EvalSampler& sampler,
                                 const RngSpec& rng);

/// tv / smoothed KL / coverage of `generated` against `target`.
EvalReport evaluate_law(const SparseDistribution& generated, const SparseDistribution& target,
                        int steps, double smoothing = kDefaultKlSmoothing);

EvalReport eval_generation(const PairCoupling& c, const TimeGrid& grid,
                           const SparseDistribution& target, const SamplerOptions& options,
                           const EvalSampler& sampler, const RngSpec& rng,
                           double smoothing = kDefaultKlSmoothing);

// Metrics CSV. Column order is normative.
inline constexpr std::string_view kMetricsVersionLine = "# redi metrics v1";
inline constexpr std::string_view kMetricsHeader =
    "kind,t,s,value_nats,method,roots,samples_per_root,seed,steps,tv,kl,coverage";

std::string metrics_row(const TCReport& r);
std::string metrics_row(const EvalReport& r);

}  // namespace redi
