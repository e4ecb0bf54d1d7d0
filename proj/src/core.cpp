#include "redi/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "redi/errors.hpp"

namespace redi {

std::string SequenceState::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::size_t SequenceHash::operator()(const SequenceState& s) const noexcept {
  // FNV-1a over token values
  std::uint64_t h = 1469598103934665603ULL;
  for (Token t : s.tokens) {
    h ^= static_cast<std::uint32_t>(t);
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h);
}

// ---------------------------------------------------------------------------
// StateSpace

StateSpace::StateSpace(int n, int d, std::optional<Token> mask_token)
    : n_(n), d_(d), mask_(mask_token) {
  if (n < 1) throw ValidationError("state space needs n >= 1, got " + std::to_string(n));
  if (d < 2) throw ValidationError("state space needs d >= 2, got " + std::to_string(d));
  if (mask_ && (*mask_ < 0 || *mask_ >= d)) {
    throw ValidationError("mask token " + std::to_string(*mask_) + " outside [0, " +
                          std::to_string(d) + ")");
  }
}

std::uint64_t StateSpace::cardinality() const {
  std::uint64_t c = 1;
  const auto dd = static_cast<std::uint64_t>(d_);
  for (int i = 0; i < n_; ++i) {
    if (c > std::numeric_limits<std::uint64_t>::max() / dd) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    c *= dd;
  }
  return c;
}

void StateSpace::require_enumerable(std::uint64_t cap, std::string_view what) const {
  if (!enumerable(cap)) {
    throw CapError(std::string(what) + ": d^n = " + std::to_string(d_) + "^" +
                   std::to_string(n_) + " exceeds dense cap " + std::to_string(cap) +
                   "; use the sampled method or raise the cap");
  }
}

bool StateSpace::contains(const SequenceState& s) const {
  if (s.size() != static_cast<std::size_t>(n_)) return false;
  return std::all_of(s.tokens.begin(), s.tokens.end(),
                     [this](Token t) { return t >= 0 && t < d_; });
}

void StateSpace::validate(const SequenceState& s) const {
  if (!contains(s)) {
    throw ValidationError("state [" + s.to_string() + "] is not in space " + header());
  }
}

std::uint64_t StateSpace::index_of(const SequenceState& s) const {
  std::uint64_t idx = 0;
  for (Token t : s.tokens) idx = idx * static_cast<std::uint64_t>(d_) + static_cast<std::uint64_t>(t);
  return idx;
}

SequenceState StateSpace::state_at(std::uint64_t index) const {
  SequenceState s;
  s.tokens.assign(static_cast<std::size_t>(n_), 0);
  for (int i = n_ - 1; i >= 0; --i) {
    s.tokens[static_cast<std::size_t>(i)] = static_cast<Token>(index % static_cast<std::uint64_t>(d_));
    index /= static_cast<std::uint64_t>(d_);
  }
  return s;
}

SequenceState StateSpace::all_mask() const {
  if (!mask_) throw ConfigError("state space " + header() + " has no mask token");
  return SequenceState(std::vector<Token>(static_cast<std::size_t>(n_), *mask_));
}

std::string StateSpace::header() const {
  return "n=" + std::to_string(n_) + " d=" + std::to_string(d_) +
         " mask=" + (mask_ ? std::to_string(*mask_) : std::string("none"));
}

// ---------------------------------------------------------------------------
// Distributions

SparseDistribution::SparseDistribution(StateSpace space, Map entries)
    : space_(std::move(space)), entries_(std::move(entries)) {
  for (const auto& [s, w] : entries_) {
    space_.validate(s);
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("negative or non-finite probability at [" + s.to_string() + "]");
    }
  }
}

SparseDistribution SparseDistribution::normalized(StateSpace space, Map entries) {
  CompensatedSum total;
  for (const auto& [s, w] : entries) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("negative or non-finite weight at [" + s.to_string() + "]");
    }
    total.add(w);
  }
  if (!(total.value() > 0.0)) throw EmptyCouplingError("distribution has zero total mass");
  const double z = total.value();
  bool pruned = false;
  for (auto it = entries.begin(); it != entries.end();) {
    it->second /= z;
    if (it->second < kPruneThreshold) {
      it = entries.erase(it);
      pruned = true;
    } else {
      ++it;
    }
  }
  if (pruned) {
    CompensatedSum rest;
    for (const auto& [s, w] : entries) rest.add(w);
    for (auto& [s, w] : entries) w /= rest.value();
  }
  return SparseDistribution(std::move(space), std::move(entries));
}

SparseDistribution SparseDistribution::point_mass(StateSpace space, SequenceState s) {
  Map m;
  m.emplace(std::move(s), 1.0);
  return SparseDistribution(std::move(space), std::move(m));
}

SparseDistribution SparseDistribution::uniform(StateSpace space,
                                               const std::vector<SequenceState>& support) {
  if (support.empty()) throw EmptyCouplingError("uniform distribution over an empty support");
  Map m;
  for (const auto& s : support) m[s] = 1.0;
  const double w = 1.0 / static_cast<double>(m.size());
  for (auto& [s, p] : m) p = w;
  return SparseDistribution(std::move(space), std::move(m));
}

double SparseDistribution::prob(const SequenceState& s) const {
  auto it = entries_.find(s);
  return it == entries_.end() ? 0.0 : it->second;
}

double SparseDistribution::total() const {
  CompensatedSum t;
  for (const auto& [s, w] : entries_) t.add(w);
  return t.value();
}

DenseDistribution::DenseDistribution(StateSpace space, std::vector<double> weights,
                                     std::uint64_t dense_cap)
    : space_(std::move(space)), weights_(std::move(weights)) {
  space_.require_enumerable(dense_cap, "dense distribution");
  if (weights_.size() != space_.cardinality()) {
    throw ValidationError("dense distribution has " + std::to_string(weights_.size()) +
                          " weights, expected " + std::to_string(space_.cardinality()));
  }
  CompensatedSum total;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("negative dense weight");
    total.add(w);
  }
  if (std::abs(total.value() - 1.0) > 1e-9) {
    throw ValidationError("dense weights sum to " + std::to_string(total.value()) + ", not 1");
  }
}

DenseDistribution DenseDistribution::from_sparse(const SparseDistribution& p,
                                                 std::uint64_t dense_cap) {
  p.space().require_enumerable(dense_cap, "dense distribution");
  std::vector<double> w(p.space().cardinality(), 0.0);
  for (const auto& [s, v] : p.entries()) w[p.space().index_of(s)] = v;
  return DenseDistribution(p.space(), std::move(w), dense_cap);
}

SparseDistribution DenseDistribution::to_sparse() const {
  SparseDistribution::Map m;
  for (std::uint64_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] > 0.0) m.emplace(space_.state_at(i), weights_[i]);
  }
  return SparseDistribution(space_, std::move(m));
}

// ---------------------------------------------------------------------------
// Couplings

PairCoupling::PairCoupling(StateSpace space, std::vector<CouplingEntry> entries)
    : space_(std::move(space)), entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    space_.validate(e.x0);
    space_.validate(e.x1);
  }
}

double PairCoupling::total_weight() const {
  CompensatedSum t;
  for (const auto& e : entries_) t.add(e.weight);
  return t.value();
}

namespace {

bool key_less(const CouplingEntry& a, const CouplingEntry& b) {
  if (a.x0 != b.x0) return a.x0 < b.x0;
  return a.x1 < b.x1;
}

bool near_one(double total, std::size_t count) {
  const double tol = 4.0 * static_cast<double>(count + 1) * std::numeric_limits<double>::epsilon();
  return std::abs(total - 1.0) <= tol;
}

}  // namespace

PairCoupling normalize_coupling(const PairCoupling& c) {
  std::vector<CouplingEntry> entries(c.entries_.begin(), c.entries_.end());
  for (const auto& e : entries) {
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      throw ValidationError("coupling entry [" + e.x0.to_string() + "] -> [" + e.x1.to_string() +
                            "] has negative or non-finite weight");
    }
  }
  // Weight as a tiebreak makes duplicate merging independent of input order.
  std::sort(entries.begin(), entries.end(), [](const CouplingEntry& a, const CouplingEntry& b) {
    if (key_less(a, b)) return true;
    if (key_less(b, a)) return false;
    return a.weight < b.weight;
  });

  std::vector<CouplingEntry> merged;
  merged.reserve(entries.size());
  for (auto& e : entries) {
    if (!merged.empty() && merged.back().x0 == e.x0 && merged.back().x1 == e.x1) {
      merged.back().weight += e.weight;
    } else {
      merged.push_back(std::move(e));
    }
  }
  std::erase_if(merged, [](const CouplingEntry& e) { return e.weight == 0.0; });

  auto total_of = [](const std::vector<CouplingEntry>& v) {
    CompensatedSum t;
    for (const auto& e : v) t.add(e.weight);
    return t.value();
  };

  double total = total_of(merged);
  if (!(total > 0.0)) throw EmptyCouplingError("coupling has zero total weight");
  if (!near_one(total, merged.size())) {
    for (auto& e : merged) e.weight /= total;
  }
  const auto before = merged.size();
  std::erase_if(merged, [](const CouplingEntry& e) { return e.weight < kPruneThreshold; });
  if (merged.empty()) throw EmptyCouplingError("coupling vanished after pruning");
  if (merged.size() != before) {
    total = total_of(merged);
    if (!near_one(total, merged.size())) {
      for (auto& e : merged) e.weight /= total;
    }
  }

  PairCoupling out(c.space_, {});
  out.entries_ = std::move(merged);
  out.canonical_ = true;
  return out;
}

SparseDistribution coupling_marginal(const PairCoupling& c, Side which) {
  SparseDistribution::Map m;
  for (const auto& e : c.entries()) m[which == Side::source ? e.x0 : e.x1] += e.weight;
  return SparseDistribution::normalized(c.space(), std::move(m));
}

SparseDistribution coupling_conditional(const PairCoupling& c, const SequenceState& x0) {
  c.space().validate(x0);
  SparseDistribution::Map m;
  for (const auto& e : c.entries()) {
    if (e.x0 == x0) m[e.x1] += e.weight;
  }
  double mass = 0.0;
  for (const auto& [s, w] : m) mass += w;
  if (!(mass > 0.0)) {
    throw ZeroMassError("source state [" + x0.to_string() + "] has zero mass under the coupling");
  }
  return SparseDistribution::normalized(c.space(), std::move(m));
}

// ---------------------------------------------------------------------------
// Schedules and grids

AlphaSchedule AlphaSchedule::power(double p) {
  if (!(p > 0.0) || !std::isfinite(p)) {
    throw DomainError("power schedule exponent must be positive, got " + std::to_string(p));
  }
  return AlphaSchedule(Kind::power, p);
}

AlphaSchedule AlphaSchedule::parse(std::string_view text) {
  if (text == "linear") return linear();
  if (text == "cosine") return cosine();
  constexpr std::string_view prefix = "power:";
  if (text.starts_with(prefix)) {
    const auto body = text.substr(prefix.size());
    double p = 0.0;
    auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), p);
    if (ec != std::errc() || ptr != body.data() + body.size()) {
      throw ConfigError("bad power exponent in schedule '" + std::string(text) + "'");
    }
    return power(p);
  }
  throw ConfigError("unknown schedule '" + std::string(text) +
                    "' (expected linear, cosine or power:<p>)");
}

std::string AlphaSchedule::to_string() const {
  switch (kind_) {
    case Kind::linear:
      return "linear";
    case Kind::cosine:
      return "cosine";
    case Kind::power: {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, exponent_);
      return "power:" + std::string(buf, ptr);
    }
  }
  return "linear";
}

double AlphaSchedule::operator()(double t) const {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  switch (kind_) {
    case Kind::linear:
      return t;
    case Kind::cosine:
      return 1.0 - std::cos(0.5 * std::numbers::pi * t);
    case Kind::power:
      return std::pow(t, exponent_);
  }
  return t;
}

double alpha_at(const AlphaSchedule& schedule, double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("time " + std::to_string(t) + " outside [0, 1]");
  }
  return schedule(t);
}

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
  if (times_.size() < 2) throw ValidationError("time grid needs at least two points");
  if (times_.front() != 0.0 || times_.back() != 1.0) {
    throw ValidationError("time grid must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < times_.size(); ++i) {
    if (!(times_[i] > times_[i - 1])) throw ValidationError("time grid must be strictly increasing");
  }
}

TimeGrid TimeGrid::uniform(int steps) {
  if (steps < 1) throw ValidationError("time grid needs at least one step");
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) t[static_cast<std::size_t>(k)] = static_cast<double>(k) / steps;
  t.front() = 0.0;
  t.back() = 1.0;
  return TimeGrid(std::move(t));
}

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

}  // namespace redi
