#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "redi/core.hpp"
#include "redi/rng.hpp"

namespace redi {

/// How the endpoint mixture of the conditional path is read.
///   coordinatewise: each coordinate independently sits at x0^i or x1^i,
///                   switching to x1^i at a latent time U_i with P(U_i <= t) = alpha(t).
///   holistic:       the whole state is x0 or x1.
enum class PathMode { coordinatewise, holistic };

PathMode parse_path_mode(std::string_view text);
std::string to_string(PathMode mode);

/// p_t(x_t | x0, x1).
double path_weight(const SequenceState& x_t, const SequenceState& x0, const SequenceState& x1,
                   double t, const AlphaSchedule& schedule, PathMode mode);

/// Probability that an unswitched coordinate has switched by time s, given it
/// had not switched by time t: (alpha_s - alpha_t) / (1 - alpha_t).
double switch_probability(double t, double s, const AlphaSchedule& schedule);

/// Law of one coordinate of X_s: stays at `current` or moves to `target`
/// with probability `jump`. current == target is a point mass.
struct CoordinateLaw {
  Token current = 0;
  Token target = 0;
  double jump = 0.0;

  double prob(Token v) const;
};

/// Law of X_s given X_t = x_t and the endpoints (x0, x1).
class Bridge {
 public:
  /// Builds the law without checking that x_t lies on the (x0, x1) path. A
  /// coordinate that is not yet at its target token switches with the usual
  /// switch probability.
  static Bridge from_current(const SequenceState& x_t, const SequenceState& x1, double t, double s,
                             const AlphaSchedule& schedule, PathMode mode);

  PathMode mode() const { return mode_; }
  /// Coordinatewise laws; for holistic mode every entry shares one switch.
  std::span<const CoordinateLaw> coordinates() const { return coords_; }

  double prob(const SequenceState& x_s) const;
  double coordinate_prob(std::size_t i, Token v) const { return coords_[i].prob(v); }

  /// Adds weight * P(x_s) into `out` for every x_s in the support.
  void accumulate(double weight, SparseDistribution::Map& out) const;

 private:
  PathMode mode_ = PathMode::coordinatewise;
  std::vector<CoordinateLaw> coords_;
  SequenceState current_;
  SequenceState target_;
  double jump_ = 0.0;
};

/// p_s(x_s | x0, x1, x_t) for t < s. Throws InconsistentBridgeError when x_t
/// has zero path weight under (x0, x1) at time t.
Bridge bridge(const SequenceState& x0, const SequenceState& x1, const SequenceState& x_t, double t,
              double s, const AlphaSchedule& schedule, PathMode mode);

/// p_t(x0, x1 | x_t), as coupling-style entries.
struct PosteriorTable {
  SequenceState x_t;
  double t = 0.0;
  std::vector<CouplingEntry> entries;
  /// Set when the table came from the relaxed fallback (x_t off-path).
  bool relaxed = false;
};

/// Bayes posterior over endpoint pairs. Normalizers below 1e-300 throw
/// OffPathError naming x_t and t.
PosteriorTable posterior(const PairCoupling& c, const SequenceState& x_t, double t,
                         const AlphaSchedule& schedule, PathMode mode);

/// Posterior that tolerates off-path x_t. When the exact normalizer vanishes,
/// each pair is scored by the number of coordinates (whole state in holistic
/// mode) where x_t is incompatible with it; pairs with the fewest
/// incompatibilities are weighted by pi times the path weight of their
/// compatible coordinates. On-path states get exactly `posterior`.
PosteriorTable relaxed_posterior(const PairCoupling& c, const SequenceState& x_t, double t,
                                 const AlphaSchedule& schedule, PathMode mode);

/// Per-dimension categorical tables, optionally tied to a context state.
class FactorizedKernel {
 public:
  FactorizedKernel(StateSpace space, SequenceState context, std::vector<double> tables);

  const StateSpace& space() const { return space_; }
  const SequenceState& context() const { return context_; }
  std::span<const double> table(std::size_t i) const;
  double prob(std::size_t i, Token v) const { return tables_[i * static_cast<std::size_t>(space_.d()) + static_cast<std::size_t>(v)]; }

  /// prod_i table_i(x^i)
  double product_prob(const SequenceState& x) const;
  /// The product distribution, expanded over its support.
  SparseDistribution joint(std::uint64_t cap = kDefaultDenseCap) const;

 private:
  StateSpace space_;
  SequenceState context_;
  std::vector<double> tables_;  // n x d, row-major
};

/// Sparse p_{s|t}(. | x_t) from a posterior table; throws CapError past cap.
SparseDistribution transition_from_posterior(const StateSpace& space, const PosteriorTable& post,
                                             double s, const AlphaSchedule& schedule, PathMode mode,
                                             std::uint64_t cap = kDefaultDenseCap);

/// Per-dimension marginals of the transition, without materializing the joint.
FactorizedKernel factorized_from_posterior(const StateSpace& space, const PosteriorTable& post,
                                           double s, const AlphaSchedule& schedule, PathMode mode);

SparseDistribution exact_transition(const PairCoupling& c, const SequenceState& x_t, double t,
                                    double s, const AlphaSchedule& schedule, PathMode mode,
                                    std::uint64_t cap = kDefaultDenseCap);

FactorizedKernel factorized_transition(const PairCoupling& c, const SequenceState& x_t, double t,
                                       double s, const AlphaSchedule& schedule, PathMode mode);

/// Reweights each table as p^(1/tau) and renormalizes. Zeros stay zero.
FactorizedKernel apply_temperature(const FactorizedKernel& k, double tau);

/// One independent draw per coordinate.
SequenceState sample_kernel(const FactorizedKernel& k, Rng& rng);

/// One factorized step x_t -> x_s with temperature tau.
SequenceState sample_step(const PairCoupling& c, const SequenceState& x_t, double t, double s,
                          const AlphaSchedule& schedule, PathMode mode, double tau, Rng& rng);
SequenceState sample_step(const PairCoupling& c, const SequenceState& x_t, double t, double s,
                          const AlphaSchedule& schedule, PathMode mode, double tau,
                          const RngSpec& rng);

/// Which kernel the multi-step sampler applies at every step.
enum class StepKernel {
  factorized,   // product of per-dimension marginals (what a DFM realizes)
  exact_joint,  // the true joint transition; analysis only
};

/// What the sampler does when an intermediate state is off-path.
enum class OffPathPolicy { error, relax };

struct SamplerOptions {
  AlphaSchedule schedule = AlphaSchedule::linear();
  PathMode mode = PathMode::coordinatewise;
  double tau = 1.0;
  StepKernel kernel = StepKernel::factorized;
  OffPathPolicy off_path = OffPathPolicy::relax;
  std::uint64_t dense_cap = kDefaultDenseCap;
  int threads = 1;
};

/// The step kernels induced by a coupling, memoized per (t, s, x_t).
/// Safe to share across threads.
class FlowModel {
 public:
  FlowModel(PairCoupling coupling, SamplerOptions options);

  const PairCoupling& coupling() const { return coupling_; }
  const SamplerOptions& options() const { return options_; }

  /// Tempered factorized kernel for x_t -> x_s.
  std::shared_ptr<const FactorizedKernel> kernel(const SequenceState& x_t, double t, double s) const;
  /// Exact joint step law for x_t -> x_s.
  std::shared_ptr<const SparseDistribution> joint_step(const SequenceState& x_t, double t,
                                                       double s) const;

  SequenceState step(const SequenceState& x_t, double t, double s, Rng& rng) const;

  /// Runs the grid from x0 and returns the final state; `path`, when given,
  /// receives every visited state including x0.
  SequenceState trajectory(const TimeGrid& grid, const SequenceState& x0, Rng& rng,
                           std::vector<SequenceState>* path = nullptr) const;

 private:
  using Key = std::tuple<double, double, SequenceState>;

  PosteriorTable step_posterior(const SequenceState& x_t, double t) const;

  PairCoupling coupling_;
  SamplerOptions options_;
  mutable std::shared_mutex mutex_;
  mutable std::map<Key, std::shared_ptr<const FactorizedKernel>> kernels_;
  mutable std::map<Key, std::shared_ptr<const SparseDistribution>> joints_;
};

/// Draws X1 from x0 by iterating factorized steps over the grid.
SequenceState sample_trajectory(const PairCoupling& c, const TimeGrid& grid,
                                const SequenceState& x0, const SamplerOptions& options,
                                const RngSpec& rng);

/// Conditional law X1 | X0 as dense rows, one per source state with mass.
class DenseKernel {
 public:
  explicit DenseKernel(StateSpace space, std::uint64_t dense_cap = kDefaultDenseCap);

  const StateSpace& space() const { return space_; }
  const std::map<SequenceState, std::vector<double>>& rows() const { return rows_; }
  std::span<const double> row(const SequenceState& x0) const;
  double prob(const SequenceState& x0, const SequenceState& x1) const;

  /// Row must have d^n entries summing to 1 within 1e-9.
  void set_row(const SequenceState& x0, std::vector<double> probs);

  bool operator==(const DenseKernel&) const = default;

 private:
  StateSpace space_;
  std::map<SequenceState, std::vector<double>> rows_;
};

/// Exact law of the multi-step sampler for every source state of c, by
/// composing the per-step kernels over all intermediate states.
DenseKernel exact_multistep_conditional(const PairCoupling& c, const TimeGrid& grid,
                                        const SamplerOptions& options);

}  // namespace redi
