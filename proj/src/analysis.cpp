#include "redi/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "parallel.hpp"
#include "redi/errors.hpp"
#include "redi/io.hpp"

namespace redi {
namespace {

void require_same_space(const SparseDistribution& p, const SparseDistribution& q) {
  if (!(p.space() == q.space())) {
    throw ValidationError("distributions live on different state spaces (" + p.space().header() +
                          " vs " + q.space().header() + ")");
  }
}

// -sum_x p(x) sum_i ln m_i(x^i) + sum_x p(x) ln p(x), with m given as n x d.
double kl_from_product(const SparseDistribution& joint, std::span<const double> marginals, int d) {
  CompensatedSum acc;
  for (const auto& [x, p] : joint.entries()) {
    if (p <= 0.0) continue;
    double log_q = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      log_q += std::log(marginals[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(x[i])]);
    }
    acc.add(p * (std::log(p) - log_q));
  }
  return acc.value();
}

}  // namespace

double kl(const SparseDistribution& p, const SparseDistribution& q,
          std::optional<double> smoothing) {
  require_same_space(p, q);
  if (smoothing && !(*smoothing >= 0.0 && *smoothing <= 1.0)) {
    throw DomainError("smoothing epsilon must lie in [0, 1]");
  }
  const double floor_mass =
      smoothing ? *smoothing / static_cast<double>(p.space().cardinality()) : 0.0;
  CompensatedSum acc;
  for (const auto& [x, px] : p.entries()) {
    if (px <= 0.0) continue;
    double qx = q.prob(x);
    if (smoothing) qx = (1.0 - *smoothing) * qx + floor_mass;
    if (!(qx > 0.0)) {
      throw DivergenceError("KL undefined: state [" + x.to_string() +
                            "] has p > 0 but q = 0 (supply a smoothing epsilon)");
    }
    acc.add(px * std::log(px / qx));
  }
  return std::max(0.0, acc.value());
}

double kl(const DenseDistribution& p, const DenseDistribution& q, std::optional<double> smoothing) {
  return kl(p.to_sparse(), q.to_sparse(), smoothing);
}

double tv(const SparseDistribution& p, const SparseDistribution& q) {
  require_same_space(p, q);
  CompensatedSum acc;
  auto a = p.entries().begin();
  auto b = q.entries().begin();
  while (a != p.entries().end() || b != q.entries().end()) {
    if (b == q.entries().end() || (a != p.entries().end() && a->first < b->first)) {
      acc.add(a->second);
      ++a;
    } else if (a == p.entries().end() || b->first < a->first) {
      acc.add(b->second);
      ++b;
    } else {
      acc.add(std::abs(a->second - b->second));
      ++a;
      ++b;
    }
  }
  return std::clamp(0.5 * acc.value(), 0.0, 1.0);
}

double tv(const DenseDistribution& p, const DenseDistribution& q) {
  return tv(p.to_sparse(), q.to_sparse());
}

double total_correlation(const SparseDistribution& joint) {
  const auto n = static_cast<std::size_t>(joint.space().n());
  const auto d = static_cast<std::size_t>(joint.space().d());
  std::vector<double> marginals(n * d, 0.0);
  for (const auto& [x, p] : joint.entries()) {
    for (std::size_t i = 0; i < n; ++i) marginals[i * d + static_cast<std::size_t>(x[i])] += p;
  }
  return std::max(0.0, kl_from_product(joint, marginals, joint.space().d()));
}

SparseDistribution path_marginal(const PairCoupling& c, double t, const AlphaSchedule& schedule,
                                 PathMode mode, std::uint64_t support_cap) {
  const double alpha = alpha_at(schedule, t);
  SparseDistribution::Map m;
  auto check = [&] {
    if (m.size() > support_cap) {
      throw CapError("x_t support at t=" + format_double(t) + " exceeds support cap " +
                     std::to_string(support_cap) + "; use the plug-in estimator");
    }
  };
  for (const auto& e : c.entries()) {
    if (mode == PathMode::holistic || e.x0 == e.x1) {
      if (e.x0 == e.x1) {
        m[e.x0] += e.weight;
      } else {
        if (alpha < 1.0) m[e.x0] += e.weight * (1.0 - alpha);
        if (alpha > 0.0) m[e.x1] += e.weight * alpha;
      }
      check();
      continue;
    }
    // Coordinatewise: each differing coordinate sits at x1^i with prob alpha.
    std::vector<std::size_t> diff;
    for (std::size_t i = 0; i < e.x0.size(); ++i) {
      if (e.x0[i] != e.x1[i]) diff.push_back(i);
    }
    if (alpha <= 0.0) {
      m[e.x0] += e.weight;
    } else if (alpha >= 1.0) {
      m[e.x1] += e.weight;
    } else {
      if (diff.size() >= 63 || (std::uint64_t{1} << diff.size()) > support_cap) {
        throw CapError("x_t support of one pair exceeds support cap " +
                       std::to_string(support_cap) + "; use the plug-in estimator");
      }
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << diff.size()); ++mask) {
        SequenceState x = e.x0;
        double w = e.weight;
        for (std::size_t k = 0; k < diff.size(); ++k) {
          if (mask >> k & 1U) {
            x[diff[k]] = e.x1[diff[k]];
            w *= alpha;
          } else {
            w *= 1.0 - alpha;
          }
        }
        m[x] += w;
      }
    }
    check();
  }
  return SparseDistribution::normalized(c.space(), std::move(m));
}

std::string to_string(TcMethod m) { return m == TcMethod::exact ? "exact" : "plugin"; }

TCReport conditional_tc_exact(const PairCoupling& c, double t, double s,
                              const AlphaSchedule& schedule, PathMode mode,
                              std::uint64_t support_cap) {
  switch_probability(t, s, schedule);
  const auto marginal = path_marginal(c, t, schedule, mode, support_cap);
  CompensatedSum acc;
  for (const auto& [x_t, weight] : marginal.entries()) {
    const auto post = posterior(c, x_t, t, schedule, mode);
    const auto joint = transition_from_posterior(c.space(), post, s, schedule, mode, support_cap);
    const auto factored = factorized_from_posterior(c.space(), post, s, schedule, mode);
    std::vector<double> tables;
    tables.reserve(static_cast<std::size_t>(c.space().n() * c.space().d()));
    for (std::size_t i = 0; i < static_cast<std::size_t>(c.space().n()); ++i) {
      const auto row = factored.table(i);
      tables.insert(tables.end(), row.begin(), row.end());
    }
    acc.add(weight * kl_from_product(joint, tables, c.space().d()));
  }
  TCReport r;
  r.t = t;
  r.s = s;
  r.value_nats = std::max(0.0, acc.value());
  r.method = TcMethod::exact;
  r.roots = marginal.support_size();
  return r;
}

double conditional_tc_single_kl(const PairCoupling& coupling) {
  // duplicates must be merged before taking logs of pi
  const PairCoupling c = coupling.canonicalized() ? coupling : normalize_coupling(coupling);
  const auto n = static_cast<std::size_t>(c.space().n());
  const auto d = static_cast<std::size_t>(c.space().d());
  const double total = c.total_weight();
  std::map<SequenceState, double> source;
  std::map<SequenceState, std::vector<double>> marg;
  for (const auto& e : c.entries()) {
    source[e.x0] += e.weight / total;
    auto& table = marg[e.x0];
    if (table.empty()) table.assign(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) table[i * d + static_cast<std::size_t>(e.x1[i])] += e.weight / total;
  }
  CompensatedSum acc;
  for (const auto& e : c.entries()) {
    const double p = e.weight / total;
    if (p <= 0.0) continue;
    const double px0 = source[e.x0];
    const auto& table = marg[e.x0];
    double log_q = std::log(px0);
    for (std::size_t i = 0; i < n; ++i) {
      log_q += std::log(table[i * d + static_cast<std::size_t>(e.x1[i])] / px0);
    }
    acc.add(p * (std::log(p) - log_q));
  }
  return std::max(0.0, acc.value());
}

double plugin_total_correlation(const StateSpace& space, std::span<const SequenceState> samples) {
  if (samples.empty()) throw ValidationError("plug-in TC needs at least one sample");
  SparseDistribution::Map counts;
  for (const auto& x : samples) counts[x] += 1.0;
  const double total = static_cast<double>(samples.size());
  for (auto& [x, c] : counts) c /= total;
  return total_correlation(SparseDistribution(space, std::move(counts)));
}

TCReport conditional_tc_plugin(const PairCoupling& c, double t, double s,
                               const AlphaSchedule& schedule, PathMode mode,
                               const PluginOptions& options) {
  if (options.roots < 1) throw ValidationError("plug-in estimator needs roots >= 1");
  if (options.samples_per_root < 2) throw ValidationError("plug-in estimator needs samples_per_root >= 2");
  switch_probability(t, s, schedule);
  if (options.forced_root) c.space().validate(*options.forced_root);

  SamplerOptions so;
  so.schedule = schedule;
  so.mode = mode;
  so.kernel = StepKernel::exact_joint;
  so.off_path = OffPathPolicy::error;
  so.dense_cap = std::max<std::uint64_t>(kDefaultDenseCap, options.samples_per_root);
  const FlowModel model(c, so);
  const double alpha = alpha_at(schedule, t);

  std::vector<double> pair_weights;
  pair_weights.reserve(c.size());
  for (const auto& e : c.entries()) pair_weights.push_back(e.weight);

  std::vector<double> per_root(options.roots, 0.0);
  detail::parallel_for(options.roots, options.threads, [&](std::size_t r) {
    Rng rng(options.rng.child("plugin-root", r));
    SequenceState x_t;
    if (options.forced_root) {
      x_t = *options.forced_root;
    } else {
      const auto& e = c.entries()[rng.categorical(pair_weights)];
      if (mode == PathMode::holistic) {
        x_t = rng.uniform() < alpha ? e.x1 : e.x0;
      } else {
        x_t = e.x0;
        for (std::size_t i = 0; i < x_t.size(); ++i) {
          if (e.x0[i] != e.x1[i] && rng.uniform() < alpha) x_t[i] = e.x1[i];
        }
      }
    }
    const auto law = model.joint_step(x_t, t, s);
    std::vector<const SequenceState*> states;
    std::vector<double> cumulative;
    double acc = 0.0;
    for (const auto& [x, p] : law->entries()) {
      states.push_back(&x);
      acc += p;
      cumulative.push_back(acc);
    }
    std::vector<SequenceState> draws;
    draws.reserve(options.samples_per_root);
    for (std::uint64_t k = 0; k < options.samples_per_root; ++k) {
      const double u = rng.uniform() * acc;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      if (it == cumulative.end()) --it;
      draws.push_back(*states[static_cast<std::size_t>(it - cumulative.begin())]);
    }
    per_root[r] = plugin_total_correlation(c.space(), draws);
  });

  CompensatedSum sum;
  for (double v : per_root) sum.add(v);
  TCReport rep;
  rep.t = t;
  rep.s = s;
  rep.value_nats = sum.value() / static_cast<double>(options.roots);
  rep.method = TcMethod::plugin;
  rep.roots = options.roots;
  rep.samples_per_root = options.samples_per_root;
  rep.seed = options.rng;
  return rep;
}

SparseDistribution generated_law(const PairCoupling& c, const TimeGrid& grid,
                                 const SamplerOptions& options, const EvalSampler& sampler,
                                 const RngSpec& rng) {
  const auto source = coupling_marginal(c, Side::source);
  SparseDistribution::Map law;
  if (sampler.kind == EvalSampler::Kind::exact_compose) {
    const auto kernel = exact_multistep_conditional(c, grid, options);
    std::vector<double> mixed(c.space().cardinality(), 0.0);
    for (const auto& [x0, p0] : source.entries()) {
      const auto row = kernel.row(x0);
      for (std::size_t i = 0; i < row.size(); ++i) mixed[i] += p0 * row[i];
    }
    for (std::uint64_t i = 0; i < mixed.size(); ++i) {
      if (mixed[i] > 0.0) law.emplace(c.space().state_at(i), mixed[i]);
    }
    return SparseDistribution::normalized(c.space(), std::move(law));
  }
  if (sampler.n < 1) throw ValidationError("monte-carlo evaluation needs n >= 1");
  const FlowModel model(c, options);
  std::vector<SequenceState> starts;
  std::vector<double> weights;
  for (const auto& [x0, p0] : source.entries()) {
    starts.push_back(x0);
    weights.push_back(p0);
  }
  std::vector<SequenceState> finals(sampler.n);
  detail::parallel_for(sampler.n, options.threads, [&](std::size_t j) {
    Rng r(rng.child("eval-draw", j));
    finals[j] = model.trajectory(grid, starts[r.categorical(weights)], r);
  });
  for (const auto& x : finals) law[x] += 1.0;
  return SparseDistribution::normalized(c.space(), std::move(law));
}

EvalReport evaluate_law(const SparseDistribution& generated, const SparseDistribution& target,
                        int steps, double smoothing) {
  EvalReport r;
  r.steps = steps;
  r.tv_to_target = tv(generated, target);
  r.kl_target_generated = kl(target, generated, smoothing);
  std::size_t covered = 0;
  for (const auto& [x, p] : target.entries()) {
    if (p > 0.0 && generated.prob(x) > 0.0) ++covered;
  }
  r.support_coverage =
      target.support_size() ? static_cast<double>(covered) / static_cast<double>(target.support_size()) : 0.0;
  return r;
}

EvalReport eval_generation(const PairCoupling& c, const TimeGrid& grid,
                           const SparseDistribution& target, const SamplerOptions& options,
                           const EvalSampler& sampler, const RngSpec& rng, double smoothing) {
  if (!(target.space() == c.space())) {
    throw ValidationError("target space " + target.space().header() +
                          " does not match coupling space " + c.space().header());
  }
  auto r = evaluate_law(generated_law(c, grid, options, sampler, rng), target, grid.steps(),
                        smoothing);
  if (sampler.kind == EvalSampler::Kind::monte_carlo) r.seed = rng;
  return r;
}

std::string metrics_row(const TCReport& r) {
  std::string row = "tc," + format_double(r.t) + "," + format_double(r.s) + "," +
                    format_double(r.value_nats) + "," + to_string(r.method) + ",";
  if (r.method == TcMethod::plugin) {
    row += std::to_string(r.roots) + "," + std::to_string(r.samples_per_root) + "," +
           (r.seed ? std::to_string(r.seed->seed) : std::string());
  } else {
    row += ",,";
  }
  row += ",,,,";
  return row;
}

std::string metrics_row(const EvalReport& r) {
  return "eval,,,,,,," + (r.seed ? std::to_string(r.seed->seed) : std::string()) + "," +
         std::to_string(r.steps) + "," + format_double(r.tv_to_target) + "," +
         format_double(r.kl_target_generated) + "," + format_double(r.support_coverage);
}

}  // namespace redi
