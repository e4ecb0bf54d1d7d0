#include "redi/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <limits>

#include "parallel.hpp"
#include "redi/errors.hpp"

namespace redi {
namespace {

constexpr double kOffPathNormalizer = 1e-300;

std::string time_string(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", t);
  return buf;
}

// Per-coordinate path factor m_i of the coordinatewise reading.
double coordinate_factor(Token v, Token a, Token b, double alpha) {
  if (a == b) return v == a ? 1.0 : 0.0;
  if (v == a) return 1.0 - alpha;
  if (v == b) return alpha;
  return 0.0;
}

void require_same_length(const StateSpace& space, const SequenceState& s) {
  if (s.size() != static_cast<std::size_t>(space.n())) space.validate(s);
}

}  // namespace

PathMode parse_path_mode(std::string_view text) {
  if (text == "coordinatewise") return PathMode::coordinatewise;
  if (text == "holistic") return PathMode::holistic;
  throw ConfigError("unknown path mode '" + std::string(text) +
                    "' (expected coordinatewise or holistic)");
}

std::string to_string(PathMode mode) {
  return mode == PathMode::coordinatewise ? "coordinatewise" : "holistic";
}

double path_weight(const SequenceState& x_t, const SequenceState& x0, const SequenceState& x1,
                   double t, const AlphaSchedule& schedule, PathMode mode) {
  const double alpha = alpha_at(schedule, t);
  if (x_t.size() != x0.size() || x_t.size() != x1.size()) {
    throw ValidationError("path_weight: states have different lengths");
  }
  if (mode == PathMode::holistic) {
    return (1.0 - alpha) * (x_t == x0 ? 1.0 : 0.0) + alpha * (x_t == x1 ? 1.0 : 0.0);
  }
  double w = 1.0;
  for (std::size_t i = 0; i < x_t.size() && w > 0.0; ++i) {
    w *= coordinate_factor(x_t[i], x0[i], x1[i], alpha);
  }
  return w;
}

double switch_probability(double t, double s, const AlphaSchedule& schedule) {
  const double at = alpha_at(schedule, t);
  const double as = alpha_at(schedule, s);
  if (!(s > t)) {
    throw DomainError("transition needs t < s, got t=" + time_string(t) + " s=" + time_string(s));
  }
  if (at >= 1.0) return 1.0;
  return std::clamp((as - at) / (1.0 - at), 0.0, 1.0);
}

double CoordinateLaw::prob(Token v) const {
  if (current == target) return v == current ? 1.0 : 0.0;
  if (v == current) return 1.0 - jump;
  if (v == target) return jump;
  return 0.0;
}

// ---------------------------------------------------------------------------
// Bridge

Bridge Bridge::from_current(const SequenceState& x_t, const SequenceState& x1, double t, double s,
                            const AlphaSchedule& schedule, PathMode mode) {
  const double rho = switch_probability(t, s, schedule);
  Bridge b;
  b.mode_ = mode;
  b.current_ = x_t;
  b.target_ = x1;
  b.jump_ = x_t == x1 ? 0.0 : rho;
  b.coords_.resize(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double jump = mode == PathMode::holistic ? b.jump_ : (x_t[i] == x1[i] ? 0.0 : rho);
    b.coords_[i] = CoordinateLaw{x_t[i], x1[i], jump};
  }
  return b;
}

double Bridge::prob(const SequenceState& x_s) const {
  if (mode_ == PathMode::holistic) {
    if (current_ == target_) return x_s == current_ ? 1.0 : 0.0;
    return (1.0 - jump_) * (x_s == current_ ? 1.0 : 0.0) + jump_ * (x_s == target_ ? 1.0 : 0.0);
  }
  double p = 1.0;
  for (std::size_t i = 0; i < coords_.size() && p > 0.0; ++i) p *= coords_[i].prob(x_s[i]);
  return p;
}

void Bridge::accumulate(double weight, SparseDistribution::Map& out) const {
  if (mode_ == PathMode::holistic) {
    if (current_ == target_ || jump_ <= 0.0) {
      out[current_] += weight;
    } else if (jump_ >= 1.0) {
      out[target_] += weight;
    } else {
      out[current_] += weight * (1.0 - jump_);
      out[target_] += weight * jump_;
    }
    return;
  }
  SequenceState base = current_;
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const auto& law = coords_[i];
    if (law.current == law.target || law.jump <= 0.0) continue;
    if (law.jump >= 1.0) {
      base[i] = law.target;
    } else {
      free.push_back(i);
    }
  }
  if (free.size() >= 63) throw CapError("bridge support exceeds 2^62 states");
  const std::uint64_t combos = std::uint64_t{1} << free.size();
  for (std::uint64_t mask = 0; mask < combos; ++mask) {
    SequenceState x = base;
    double p = weight;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const auto& law = coords_[free[k]];
      if (mask >> k & 1U) {
        x[free[k]] = law.target;
        p *= law.jump;
      } else {
        p *= 1.0 - law.jump;
      }
    }
    out[x] += p;
  }
}

Bridge bridge(const SequenceState& x0, const SequenceState& x1, const SequenceState& x_t, double t,
              double s, const AlphaSchedule& schedule, PathMode mode) {
  if (!(s > t)) {
    throw DomainError("bridge needs t < s, got t=" + time_string(t) + " s=" + time_string(s));
  }
  if (!(path_weight(x_t, x0, x1, t, schedule, mode) > 0.0)) {
    throw InconsistentBridgeError("state [" + x_t.to_string() + "] is not on the path from [" +
                                  x0.to_string() + "] to [" + x1.to_string() +
                                  "] at t=" + time_string(t));
  }
  return Bridge::from_current(x_t, x1, t, s, schedule, mode);
}

// ---------------------------------------------------------------------------
// Posterior

PosteriorTable posterior(const PairCoupling& c, const SequenceState& x_t, double t,
                         const AlphaSchedule& schedule, PathMode mode) {
  c.space().validate(x_t);
  PosteriorTable post{x_t, t, {}, false};
  CompensatedSum z;
  for (const auto& e : c.entries()) {
    const double w = e.weight * path_weight(x_t, e.x0, e.x1, t, schedule, mode);
    if (w > 0.0) {
      post.entries.push_back({e.x0, e.x1, w});
      z.add(w);
    }
  }
  if (!(z.value() >= kOffPathNormalizer)) {
    throw OffPathError("state [" + x_t.to_string() + "] is off-path at t=" + time_string(t) +
                       " (posterior normalizer vanishes)");
  }
  for (auto& e : post.entries) e.weight /= z.value();
  return post;
}

PosteriorTable relaxed_posterior(const PairCoupling& c, const SequenceState& x_t, double t,
                                 const AlphaSchedule& schedule, PathMode mode) {
  try {
    return posterior(c, x_t, t, schedule, mode);
  } catch (const OffPathError&) {
  }
  const double alpha = alpha_at(schedule, t);
  struct Scored {
    const CouplingEntry* entry;
    std::size_t mismatches;
    double weight;
  };
  std::vector<Scored> scored;
  scored.reserve(c.size());
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (const auto& e : c.entries()) {
    std::size_t mismatches = 0;
    double w = e.weight;
    if (mode == PathMode::holistic) {
      const double pw = path_weight(x_t, e.x0, e.x1, t, schedule, mode);
      if (pw > 0.0) {
        w *= pw;
      } else {
        mismatches = 1;
      }
    } else {
      for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double m = coordinate_factor(x_t[i], e.x0[i], e.x1[i], alpha);
        if (m > 0.0) {
          w *= m;
        } else {
          ++mismatches;
        }
      }
    }
    if (w > 0.0) {
      scored.push_back({&e, mismatches, w});
      best = std::min(best, mismatches);
    }
  }
  PosteriorTable post{x_t, t, {}, true};
  CompensatedSum z;
  for (const auto& sc : scored) {
    if (sc.mismatches != best) continue;
    post.entries.push_back({sc.entry->x0, sc.entry->x1, sc.weight});
    z.add(sc.weight);
  }
  if (!(z.value() >= kOffPathNormalizer)) {
    throw OffPathError("state [" + x_t.to_string() + "] has no relaxed posterior at t=" +
                       time_string(t));
  }
  for (auto& e : post.entries) e.weight /= z.value();
  return post;
}

// ---------------------------------------------------------------------------
// Factorized kernels

FactorizedKernel::FactorizedKernel(StateSpace space, SequenceState context,
                                   std::vector<double> tables)
    : space_(std::move(space)), context_(std::move(context)), tables_(std::move(tables)) {
  const auto n = static_cast<std::size_t>(space_.n());
  const auto d = static_cast<std::size_t>(space_.d());
  if (tables_.size() != n * d) {
    throw ValidationError("factorized kernel needs n*d = " + std::to_string(n * d) + " entries");
  }
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t v = 0; v < d; ++v) {
      const double p = tables_[i * d + v];
      if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("negative kernel entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("kernel table " + std::to_string(i) + " sums to " +
                            std::to_string(total));
    }
  }
}

std::span<const double> FactorizedKernel::table(std::size_t i) const {
  const auto d = static_cast<std::size_t>(space_.d());
  return std::span<const double>(tables_).subspan(i * d, d);
}

double FactorizedKernel::product_prob(const SequenceState& x) const {
  double p = 1.0;
  for (std::size_t i = 0; i < x.size() && p > 0.0; ++i) p *= prob(i, x[i]);
  return p;
}

SparseDistribution FactorizedKernel::joint(std::uint64_t cap) const {
  const auto n = static_cast<std::size_t>(space_.n());
  std::vector<std::vector<Token>> support(n);
  double combos = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (Token v = 0; v < space_.d(); ++v) {
      if (prob(i, v) > 0.0) support[i].push_back(v);
    }
    combos *= static_cast<double>(support[i].size());
  }
  if (combos > static_cast<double>(cap)) {
    throw CapError("factorized joint support exceeds cap " + std::to_string(cap));
  }
  std::vector<std::pair<SequenceState, double>> partial{{SequenceState{}, 1.0}};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<SequenceState, double>> next;
    next.reserve(partial.size() * support[i].size());
    for (const auto& [s, p] : partial) {
      for (Token v : support[i]) {
        SequenceState x = s;
        x.tokens.push_back(v);
        next.emplace_back(std::move(x), p * prob(i, v));
      }
    }
    partial = std::move(next);
  }
  SparseDistribution::Map m;
  for (auto& [s, p] : partial) m.emplace(std::move(s), p);
  return SparseDistribution(space_, std::move(m));
}

SparseDistribution transition_from_posterior(const StateSpace& space, const PosteriorTable& post,
                                             double s, const AlphaSchedule& schedule, PathMode mode,
                                             std::uint64_t cap) {
  SparseDistribution::Map out;
  for (const auto& e : post.entries) {
    Bridge::from_current(post.x_t, e.x1, post.t, s, schedule, mode).accumulate(e.weight, out);
    if (out.size() > cap) {
      throw CapError("transition support from [" + post.x_t.to_string() + "] exceeds cap " +
                     std::to_string(cap) + "; use the plug-in estimator or sampled mode");
    }
  }
  return SparseDistribution::normalized(space, std::move(out));
}

FactorizedKernel factorized_from_posterior(const StateSpace& space, const PosteriorTable& post,
                                           double s, const AlphaSchedule& schedule, PathMode mode) {
  const auto n = static_cast<std::size_t>(space.n());
  const auto d = static_cast<std::size_t>(space.d());
  std::vector<double> tables(n * d, 0.0);
  const double rho = switch_probability(post.t, s, schedule);
  for (const auto& e : post.entries) {
    const bool whole_at_target = post.x_t == e.x1;
    for (std::size_t i = 0; i < n; ++i) {
      const auto cur = static_cast<std::size_t>(post.x_t[i]);
      const auto tgt = static_cast<std::size_t>(e.x1[i]);
      if (cur == tgt) {
        tables[i * d + cur] += e.weight;
        continue;
      }
      const double jump = (mode == PathMode::holistic && whole_at_target) ? 0.0 : rho;
      tables[i * d + cur] += e.weight * (1.0 - jump);
      tables[i * d + tgt] += e.weight * jump;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t v = 0; v < d; ++v) total += tables[i * d + v];
    for (std::size_t v = 0; v < d; ++v) tables[i * d + v] /= total;
  }
  return FactorizedKernel(space, post.x_t, std::move(tables));
}

SparseDistribution exact_transition(const PairCoupling& c, const SequenceState& x_t, double t,
                                    double s, const AlphaSchedule& schedule, PathMode mode,
                                    std::uint64_t cap) {
  require_same_length(c.space(), x_t);
  switch_probability(t, s, schedule);  // validates t < s
  return transition_from_posterior(c.space(), posterior(c, x_t, t, schedule, mode), s, schedule,
                                   mode, cap);
}

FactorizedKernel factorized_transition(const PairCoupling& c, const SequenceState& x_t, double t,
                                       double s, const AlphaSchedule& schedule, PathMode mode) {
  require_same_length(c.space(), x_t);
  switch_probability(t, s, schedule);
  return factorized_from_posterior(c.space(), posterior(c, x_t, t, schedule, mode), s, schedule,
                                   mode);
}

FactorizedKernel apply_temperature(const FactorizedKernel& k, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("temperature must be positive, got " + std::to_string(tau));
  }
  if (tau == 1.0) return k;
  const auto n = static_cast<std::size_t>(k.space().n());
  const auto d = static_cast<std::size_t>(k.space().d());
  std::vector<double> tables(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = k.table(i);
    const double top = *std::max_element(row.begin(), row.end());
    const double log_top = std::log(top);
    double total = 0.0;
    for (std::size_t v = 0; v < d; ++v) {
      if (row[v] > 0.0) {
        // relative to the max so small tau cannot underflow everything
        tables[i * d + v] = std::exp((std::log(row[v]) - log_top) / tau);
        total += tables[i * d + v];
      }
    }
    for (std::size_t v = 0; v < d; ++v) tables[i * d + v] /= total;
  }
  return FactorizedKernel(k.space(), k.context(), std::move(tables));
}

SequenceState sample_kernel(const FactorizedKernel& k, Rng& rng) {
  SequenceState x;
  x.tokens.resize(static_cast<std::size_t>(k.space().n()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<Token>(rng.categorical(k.table(i)));
  }
  return x;
}

SequenceState sample_step(const PairCoupling& c, const SequenceState& x_t, double t, double s,
                          const AlphaSchedule& schedule, PathMode mode, double tau, Rng& rng) {
  return sample_kernel(apply_temperature(factorized_transition(c, x_t, t, s, schedule, mode), tau),
                       rng);
}

SequenceState sample_step(const PairCoupling& c, const SequenceState& x_t, double t, double s,
                          const AlphaSchedule& schedule, PathMode mode, double tau,
                          const RngSpec& spec) {
  Rng rng(spec);
  return sample_step(c, x_t, t, s, schedule, mode, tau, rng);
}

// ---------------------------------------------------------------------------
// FlowModel

FlowModel::FlowModel(PairCoupling coupling, SamplerOptions options)
    : coupling_(std::move(coupling)), options_(std::move(options)) {
  if (!(options_.tau > 0.0) || !std::isfinite(options_.tau)) {
    throw DomainError("temperature must be positive, got " + std::to_string(options_.tau));
  }
  if (options_.kernel == StepKernel::exact_joint && options_.tau != 1.0) {
    throw ConfigError("temperature applies to factorized kernels only; use tau=1 with exact_joint");
  }
}

PosteriorTable FlowModel::step_posterior(const SequenceState& x_t, double t) const {
  if (options_.off_path == OffPathPolicy::relax) {
    return relaxed_posterior(coupling_, x_t, t, options_.schedule, options_.mode);
  }
  return posterior(coupling_, x_t, t, options_.schedule, options_.mode);
}

std::shared_ptr<const FactorizedKernel> FlowModel::kernel(const SequenceState& x_t, double t,
                                                          double s) const {
  Key key{t, s, x_t};
  {
    std::shared_lock lock(mutex_);
    if (auto it = kernels_.find(key); it != kernels_.end()) return it->second;
  }
  auto k = std::make_shared<const FactorizedKernel>(apply_temperature(
      factorized_from_posterior(coupling_.space(), step_posterior(x_t, t), s, options_.schedule,
                                options_.mode),
      options_.tau));
  std::unique_lock lock(mutex_);
  return kernels_.emplace(std::move(key), std::move(k)).first->second;
}

std::shared_ptr<const SparseDistribution> FlowModel::joint_step(const SequenceState& x_t, double t,
                                                                double s) const {
  Key key{t, s, x_t};
  {
    std::shared_lock lock(mutex_);
    if (auto it = joints_.find(key); it != joints_.end()) return it->second;
  }
  auto j = std::make_shared<const SparseDistribution>(
      transition_from_posterior(coupling_.space(), step_posterior(x_t, t), s, options_.schedule,
                                options_.mode, options_.dense_cap));
  std::unique_lock lock(mutex_);
  return joints_.emplace(std::move(key), std::move(j)).first->second;
}

SequenceState FlowModel::step(const SequenceState& x_t, double t, double s, Rng& rng) const {
  if (options_.kernel == StepKernel::factorized) return sample_kernel(*kernel(x_t, t, s), rng);
  const auto law = joint_step(x_t, t, s);
  std::vector<double> w;
  w.reserve(law->support_size());
  for (const auto& [x, p] : law->entries()) w.push_back(p);
  auto pick = rng.categorical(w);
  return std::next(law->entries().begin(), static_cast<std::ptrdiff_t>(pick))->first;
}

SequenceState FlowModel::trajectory(const TimeGrid& grid, const SequenceState& x0, Rng& rng,
                                    std::vector<SequenceState>* path) const {
  coupling_.space().validate(x0);
  const auto times = grid.times();
  SequenceState x = x0;
  if (path) path->push_back(x);
  for (std::size_t m = 0; m + 1 < times.size(); ++m) {
    x = step(x, times[m], times[m + 1], rng);
    if (path) path->push_back(x);
  }
  return x;
}

SequenceState sample_trajectory(const PairCoupling& c, const TimeGrid& grid,
                                const SequenceState& x0, const SamplerOptions& options,
                                const RngSpec& spec) {
  if (!(coupling_marginal(c, Side::source).prob(x0) > 0.0)) {
    throw ZeroMassError("trajectory start [" + x0.to_string() + "] is outside the source support");
  }
  FlowModel model(c, options);
  Rng rng(spec);
  return model.trajectory(grid, x0, rng);
}

// ---------------------------------------------------------------------------
// Dense kernels

DenseKernel::DenseKernel(StateSpace space, std::uint64_t dense_cap) : space_(std::move(space)) {
  space_.require_enumerable(dense_cap, "dense kernel");
}

std::span<const double> DenseKernel::row(const SequenceState& x0) const {
  auto it = rows_.find(x0);
  if (it == rows_.end()) {
    throw ZeroMassError("dense kernel has no row for [" + x0.to_string() + "]");
  }
  return it->second;
}

double DenseKernel::prob(const SequenceState& x0, const SequenceState& x1) const {
  return row(x0)[space_.index_of(x1)];
}

void DenseKernel::set_row(const SequenceState& x0, std::vector<double> probs) {
  space_.validate(x0);
  if (probs.size() != space_.cardinality()) throw ValidationError("dense kernel row has wrong size");
  CompensatedSum total;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ValidationError("negative dense kernel entry");
    total.add(p);
  }
  if (std::abs(total.value() - 1.0) > 1e-9) {
    throw ValidationError("dense kernel row [" + x0.to_string() + "] sums to " +
                          std::to_string(total.value()));
  }
  rows_[x0] = std::move(probs);
}

DenseKernel exact_multistep_conditional(const PairCoupling& c, const TimeGrid& grid,
                                        const SamplerOptions& options) {
  const StateSpace& space = c.space();
  space.require_enumerable(options.dense_cap, "exact multi-step composition");
  const auto size = static_cast<std::size_t>(space.cardinality());
  const auto d = static_cast<std::uint64_t>(space.d());
  const auto n = static_cast<std::size_t>(space.n());
  const FlowModel model(c, options);
  const auto source = coupling_marginal(c, Side::source);
  std::vector<SequenceState> starts;
  for (const auto& [x0, p] : source.entries()) starts.push_back(x0);

  const auto times = grid.times();
  std::vector<std::vector<double>> rows(starts.size());
  detail::parallel_for(starts.size(), options.threads, [&](std::size_t r) {
    std::vector<double> cur(size, 0.0);
    cur[space.index_of(starts[r])] = 1.0;
    std::vector<std::pair<std::uint64_t, double>> partial;
    std::vector<std::pair<std::uint64_t, double>> grown;
    for (std::size_t m = 0; m + 1 < times.size(); ++m) {
      std::vector<double> next(size, 0.0);
      for (std::size_t j = 0; j < size; ++j) {
        if (cur[j] == 0.0) continue;
        const SequenceState x = space.state_at(j);
        if (options.kernel == StepKernel::exact_joint) {
          const auto law = model.joint_step(x, times[m], times[m + 1]);
          for (const auto& [y, p] : law->entries()) {
            next[space.index_of(y)] += cur[j] * p;
          }
          continue;
        }
        const auto k = model.kernel(x, times[m], times[m + 1]);
        partial.assign(1, {0, cur[j]});
        for (std::size_t i = 0; i < n; ++i) {
          grown.clear();
          const auto table = k->table(i);
          for (const auto& [idx, p] : partial) {
            for (std::uint64_t v = 0; v < d; ++v) {
              if (table[v] > 0.0) grown.emplace_back(idx * d + v, p * table[v]);
            }
          }
          partial.swap(grown);
        }
        for (const auto& [idx, p] : partial) next[idx] += p;
      }
      cur = std::move(next);
    }
    rows[r] = std::move(cur);
  });

  DenseKernel out(space, options.dense_cap);
  for (std::size_t r = 0; r < starts.size(); ++r) out.set_row(starts[r], std::move(rows[r]));
  return out;
}

}  // namespace redi
