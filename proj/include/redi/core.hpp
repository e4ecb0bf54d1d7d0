#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace redi {

using Token = std::int32_t;

/// Default bound on d^n for anything that materializes the full state space.
inline constexpr std::uint64_t kDefaultDenseCap = 65536;

/// Sparse results drop probabilities below this after normalization.
inline constexpr double kPruneThreshold = 1e-15;

/// A token sequence. Validity (length, token range) is relative to a
/// StateSpace; see StateSpace::validate.
struct SequenceState {
  std::vector<Token> tokens;

  SequenceState() = default;
  explicit SequenceState(std::vector<Token> t) : tokens(std::move(t)) {}
  SequenceState(std::initializer_list<Token> t) : tokens(t) {}

  std::size_t size() const { return tokens.size(); }
  Token operator[](std::size_t i) const { return tokens[i]; }
  Token& operator[](std::size_t i) { return tokens[i]; }

  /// Space-separated tokens, e.g. "0 1".
  std::string to_string() const;

  auto operator<=>(const SequenceState&) const = default;
  bool operator==(const SequenceState&) const = default;
};

struct SequenceHash {
  std::size_t operator()(const SequenceState& s) const noexcept;
};

/// Sequence length n over an alphabet of d tokens, with an optional mask
/// token. States are indexed in base d, first token most significant, so
/// index order equals lexicographic token order.
class StateSpace {
 public:
  StateSpace(int n, int d, std::optional<Token> mask_token = std::nullopt);

  int n() const { return n_; }
  int d() const { return d_; }
  std::optional<Token> mask_token() const { return mask_; }

  /// d^n, saturating at UINT64_MAX.
  std::uint64_t cardinality() const;
  bool enumerable(std::uint64_t cap = kDefaultDenseCap) const { return cardinality() <= cap; }
  /// Throws CapError naming `what` when d^n exceeds cap.
  void require_enumerable(std::uint64_t cap, std::string_view what) const;

  bool contains(const SequenceState& s) const;
  /// Throws ValidationError when s is not a state of this space.
  void validate(const SequenceState& s) const;

  std::uint64_t index_of(const SequenceState& s) const;
  SequenceState state_at(std::uint64_t index) const;
  /// The state with every coordinate equal to the mask token.
  SequenceState all_mask() const;

  std::string header() const;  // "n=2 d=2 mask=none"

  bool operator==(const StateSpace&) const = default;

 private:
  int n_;
  int d_;
  std::optional<Token> mask_;
};

/// Finitely supported distribution over states, kept in state order.
class SparseDistribution {
 public:
  using Map = std::map<SequenceState, double>;

  explicit SparseDistribution(StateSpace space, Map entries = {});

  /// Validates nonnegativity, divides by the total and prunes dust.
  static SparseDistribution normalized(StateSpace space, Map entries);
  static SparseDistribution point_mass(StateSpace space, SequenceState s);
  static SparseDistribution uniform(StateSpace space, const std::vector<SequenceState>& support);

  const StateSpace& space() const { return space_; }
  const Map& entries() const { return entries_; }
  double prob(const SequenceState& s) const;
  double total() const;
  std::size_t support_size() const { return entries_.size(); }

 private:
  StateSpace space_;
  Map entries_;
};

/// Probability vector over all d^n states, indexed by StateSpace::index_of.
class DenseDistribution {
 public:
  DenseDistribution(StateSpace space, std::vector<double> weights,
                    std::uint64_t dense_cap = kDefaultDenseCap);

  static DenseDistribution from_sparse(const SparseDistribution& p,
                                       std::uint64_t dense_cap = kDefaultDenseCap);
  SparseDistribution to_sparse() const;

  const StateSpace& space() const { return space_; }
  std::span<const double> weights() const { return weights_; }
  double prob(const SequenceState& s) const { return weights_[space_.index_of(s)]; }

 private:
  StateSpace space_;
  std::vector<double> weights_;
};

struct CouplingEntry {
  SequenceState x0;
  SequenceState x1;
  double weight = 0.0;

  bool operator==(const CouplingEntry&) const = default;
};

/// Sparse joint distribution over (X0, X1) pairs.
class PairCoupling {
 public:
  /// Stores entries as given (tokens are validated, weights are not).
  /// Use normalize_coupling for the canonical form.
  PairCoupling(StateSpace space, std::vector<CouplingEntry> entries);

  const StateSpace& space() const { return space_; }
  std::span<const CouplingEntry> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool canonicalized() const { return canonical_; }
  double total_weight() const;

  bool operator==(const PairCoupling& o) const {
    return space_ == o.space_ && entries_ == o.entries_;
  }

 private:
  friend PairCoupling normalize_coupling(const PairCoupling& c);

  StateSpace space_;
  std::vector<CouplingEntry> entries_;
  bool canonical_ = false;
};

/// Merge duplicate (x0, x1) keys, sort lexicographically, renormalize to 1 and
/// prune weights below kPruneThreshold. Idempotent and insensitive to input
/// entry order.
PairCoupling normalize_coupling(const PairCoupling& c);

enum class Side { source, target };

SparseDistribution coupling_marginal(const PairCoupling& c, Side which);

/// pi(x1 | x0); throws ZeroMassError when x0 has no source mass.
SparseDistribution coupling_conditional(const PairCoupling& c, const SequenceState& x0);

/// Monotone time coefficient with alpha(0) = 0 and alpha(1) = 1.
class AlphaSchedule {
 public:
  enum class Kind { linear, cosine, power };

  static AlphaSchedule linear() { return AlphaSchedule(Kind::linear, 1.0); }
  /// alpha(t) = 1 - cos(pi t / 2)
  static AlphaSchedule cosine() { return AlphaSchedule(Kind::cosine, 1.0); }
  /// alpha(t) = t^p, p > 0
  static AlphaSchedule power(double p);
  /// Accepts "linear", "cosine" or "power:<p>".
  static AlphaSchedule parse(std::string_view text);

  Kind kind() const { return kind_; }
  double exponent() const { return exponent_; }
  std::string to_string() const;

  double operator()(double t) const;

  bool operator==(const AlphaSchedule&) const = default;

 private:
  AlphaSchedule(Kind k, double p) : kind_(k), exponent_(p) {}

  Kind kind_;
  double exponent_;
};

/// alpha(t); throws DomainError for t outside [0, 1].
double alpha_at(const AlphaSchedule& schedule, double t);

/// Decoding times 0 = t_0 < t_1 < ... < t_M = 1.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times);
  /// M equal steps; endpoints exact.
  static TimeGrid uniform(int steps);

  std::span<const double> times() const { return times_; }
  int steps() const { return static_cast<int>(times_.size()) - 1; }

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> times_;
};

/// Neumaier-compensated running sum; summation order stays caller-defined.
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace redi
