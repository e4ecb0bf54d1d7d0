#include "redi/rectify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "redi/errors.hpp"
#include "redi/io.hpp"

namespace redi {

std::string describe(const RectifyMethod& m) {
  if (const auto* s = std::get_if<SampledMethod>(&m)) {
    return "sampled(" + std::to_string(s->pairs) + ")";
  }
  return "exact";
}

PairCoupling rectify_exact(const PairCoupling& c, const RectifyConfig& cfg) {
  const auto kernel = exact_multistep_conditional(c, cfg.grid, cfg.sampler);
  const auto source = coupling_marginal(c, Side::source);
  const StateSpace& space = c.space();
  std::vector<CouplingEntry> entries;
  for (const auto& [x0, p0] : source.entries()) {
    const auto row = kernel.row(x0);
    for (std::uint64_t i = 0; i < row.size(); ++i) {
      if (row[i] > 0.0) entries.push_back({x0, space.state_at(i), p0 * row[i]});
    }
  }
  return normalize_coupling(PairCoupling(space, std::move(entries)));
}

PairCoupling rectify_sampled(const PairCoupling& c, const RectifyConfig& cfg) {
  const auto* method = std::get_if<SampledMethod>(&cfg.method);
  if (!method) throw ConfigError("rectify_sampled needs a sampled method");
  if (method->pairs < 1) throw ValidationError("sampled rectification needs pairs >= 1");
  const auto source = coupling_marginal(c, Side::source);
  std::vector<SequenceState> starts;
  std::vector<double> weights;
  for (const auto& [x0, p0] : source.entries()) {
    starts.push_back(x0);
    weights.push_back(p0);
  }
  const FlowModel model(c, cfg.sampler);
  std::vector<CouplingEntry> entries(method->pairs);
  const double w = 1.0 / static_cast<double>(method->pairs);
  detail::parallel_for(method->pairs, cfg.sampler.threads, [&](std::size_t j) {
    Rng rng(cfg.rng.child("rectify-pair", j));
    const SequenceState& x0 = starts[rng.categorical(weights)];
    entries[j] = CouplingEntry{x0, model.trajectory(cfg.grid, x0, rng), w};
  });
  return normalize_coupling(PairCoupling(c.space(), std::move(entries)));
}

PairCoupling rectify(const PairCoupling& c, const RectifyConfig& cfg) {
  if (std::holds_alternative<SampledMethod>(cfg.method)) return rectify_sampled(c, cfg);
  return rectify_exact(c, cfg);
}

namespace {

std::pair<double, TcMethod> probe_tc(const PairCoupling& c, const RectifyConfig& cfg,
                                     const TcProbe& probe, std::size_t k) {
  try {
    return {conditional_tc_exact(c, probe.t, probe.s, cfg.sampler.schedule, cfg.sampler.mode,
                                 probe.support_cap)
                .value_nats,
            TcMethod::exact};
  } catch (const CapError&) {
    PluginOptions po = probe.plugin;
    po.rng = probe.plugin.rng.child("tc-probe", k);
    return {conditional_tc_plugin(c, probe.t, probe.s, cfg.sampler.schedule, cfg.sampler.mode, po)
                .value_nats,
            TcMethod::plugin};
  }
}

}  // namespace

RediRun redi_iterate(const PairCoupling& c0, int iterations,
                     std::span<const RectifyConfig> configs, const TcProbe& probe) {
  if (iterations < 1) throw ValidationError("redi_iterate needs K >= 1");
  if (configs.size() != 1 && configs.size() != static_cast<std::size_t>(iterations)) {
    throw ConfigError("redi_iterate needs one config or exactly K configs");
  }
  RediRun run;
  run.couplings.push_back(c0.canonicalized() ? c0 : normalize_coupling(c0));
  auto [tc0, m0] = probe_tc(run.couplings.back(), configs[0], probe, 0);
  run.tc_curve.push_back(tc0);
  run.tc_methods.push_back(m0);
  for (int k = 0; k < iterations; ++k) {
    const RectifyConfig& cfg = configs.size() == 1 ? configs[0] : configs[static_cast<std::size_t>(k)];
    run.configs.push_back(cfg);
    run.couplings.push_back(rectify(run.couplings.back(), cfg));
    auto [tc, m] = probe_tc(run.couplings.back(), cfg, probe, static_cast<std::size_t>(k) + 1);
    run.tc_curve.push_back(tc);
    run.tc_methods.push_back(m);
  }
  return run;
}

// ---------------------------------------------------------------------------
// One-step model

OneStepModel one_step_model(const PairCoupling& c) {
  const auto n = static_cast<std::size_t>(c.space().n());
  const auto d = static_cast<std::size_t>(c.space().d());
  OneStepModel model{coupling_marginal(c, Side::source), {}};
  for (const auto& [x0, p0] : model.source.entries()) {
    std::vector<double> tables(n * d, 0.0);
    const auto conditional = coupling_conditional(c, x0);
    for (const auto& [x1, p] : conditional.entries()) {
      for (std::size_t i = 0; i < n; ++i) tables[i * d + static_cast<std::size_t>(x1[i])] += p;
    }
    model.rows.emplace(x0, FactorizedKernel(c.space(), x0, std::move(tables)));
  }
  return model;
}

SparseDistribution one_step_law(const OneStepModel& model, std::uint64_t cap) {
  SparseDistribution::Map law;
  for (const auto& [x0, p0] : model.source.entries()) {
    const auto joint = model.rows.at(x0).joint(cap);
    for (const auto& [x1, p] : joint.entries()) law[x1] += p0 * p;
  }
  return SparseDistribution::normalized(model.source.space(), std::move(law));
}

std::vector<SequenceState> sample_one_step(const OneStepModel& model, std::uint64_t n,
                                           const RngSpec& rng, double tau, int threads) {
  std::vector<SequenceState> starts;
  std::vector<double> weights;
  std::vector<FactorizedKernel> kernels;
  for (const auto& [x0, p0] : model.source.entries()) {
    starts.push_back(x0);
    weights.push_back(p0);
    kernels.push_back(apply_temperature(model.rows.at(x0), tau));
  }
  std::vector<SequenceState> out(n);
  detail::parallel_for(n, threads, [&](std::size_t j) {
    Rng r(rng.child("onestep-draw", j));
    out[j] = sample_kernel(kernels[r.categorical(weights)], r);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Builders

PairCoupling build_independent(const SparseDistribution& p0, const SparseDistribution& q1) {
  if (!(p0.space() == q1.space())) {
    throw ValidationError("source and target live on different state spaces");
  }
  std::vector<CouplingEntry> entries;
  entries.reserve(p0.support_size() * q1.support_size());
  for (const auto& [x0, a] : p0.entries()) {
    for (const auto& [x1, b] : q1.entries()) entries.push_back({x0, x1, a * b});
  }
  return normalize_coupling(PairCoupling(p0.space(), std::move(entries)));
}

SparseDistribution fig1_source() {
  const StateSpace space(2, 2);
  return SparseDistribution::uniform(space, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
}

SparseDistribution fig1_target() {
  const StateSpace space(2, 2);
  return SparseDistribution::uniform(space, {{0, 0}, {1, 1}});
}

PairCoupling build_fig1(Fig1Coupling which) {
  if (which == Fig1Coupling::pi0) return build_independent(fig1_source(), fig1_target());
  const StateSpace space(2, 2);
  return normalize_coupling(PairCoupling(space, {
                                                    {{0, 0}, {0, 0}, 0.25},
                                                    {{0, 1}, {1, 1}, 0.25},
                                                    {{1, 0}, {0, 0}, 0.25},
                                                    {{1, 1}, {1, 1}, 0.25},
                                                }));
}

SparseDistribution masked_source(const StateSpace& space, double r, std::uint64_t dense_cap) {
  if (!space.mask_token()) {
    throw ConfigError("masked source needs a state space with a mask token");
  }
  if (!(r >= 0.0 && r <= 1.0)) throw DomainError("interpolation ratio r must lie in [0, 1]");
  const SequenceState mask = space.all_mask();
  if (r == 1.0) return SparseDistribution::point_mass(space, mask);
  space.require_enumerable(dense_cap, "uniform source");
  const auto size = space.cardinality();
  const double u = (1.0 - r) / static_cast<double>(size);
  SparseDistribution::Map m;
  for (std::uint64_t i = 0; i < size; ++i) m.emplace(space.state_at(i), u);
  m[mask] += r;
  return SparseDistribution::normalized(space, std::move(m));
}

PairCoupling build_masked_source(const StateSpace& space, double r, const SparseDistribution& q1,
                                 std::uint64_t dense_cap) {
  return build_independent(masked_source(space, r, dense_cap), q1);
}

PairCoupling build_random(const StateSpace& space, std::uint64_t support_size, const RngSpec& spec) {
  const std::uint64_t states = space.cardinality();
  const bool square_fits = states <= (std::uint64_t{1} << 31);
  const std::uint64_t pairs = square_fits ? states * states : UINT64_MAX;
  if (support_size < 1 || (square_fits && support_size > pairs)) {
    throw ValidationError("random coupling support must lie in [1, (d^n)^2]");
  }
  Rng rng(spec);
  std::vector<std::pair<SequenceState, SequenceState>> chosen;
  auto random_state = [&] {
    SequenceState s;
    s.tokens.resize(static_cast<std::size_t>(space.n()));
    for (auto& tok : s.tokens) tok = static_cast<Token>(rng.below(static_cast<std::uint64_t>(space.d())));
    return s;
  };
  if (pairs <= (std::uint64_t{1} << 22)) {
    // partial Fisher-Yates over pair indices
    std::vector<std::uint64_t> idx(pairs);
    std::iota(idx.begin(), idx.end(), std::uint64_t{0});
    for (std::uint64_t k = 0; k < support_size; ++k) {
      std::swap(idx[k], idx[k + rng.below(pairs - k)]);
      chosen.emplace_back(space.state_at(idx[k] / states), space.state_at(idx[k] % states));
    }
  } else {
    std::set<std::pair<SequenceState, SequenceState>> seen;
    while (chosen.size() < support_size) {
      auto a = random_state();
      auto b = random_state();
      if (seen.emplace(a, b).second) chosen.emplace_back(std::move(a), std::move(b));
    }
  }
  std::vector<CouplingEntry> entries;
  entries.reserve(chosen.size());
  for (auto& [a, b] : chosen) entries.push_back({std::move(a), std::move(b), 1.0 - rng.uniform()});
  return normalize_coupling(PairCoupling(space, std::move(entries)));
}

// ---------------------------------------------------------------------------
// Battery

std::vector<PairCoupling> random_battery(std::size_t count, std::uint64_t seed) {
  static const std::pair<int, int> shapes[] = {{2, 2}, {2, 3}, {3, 2}, {3, 3}};
  std::vector<PairCoupling> out;
  out.reserve(count);
  const RngSpec base{seed, "battery", 0};
  for (std::size_t i = 0; i < count; ++i) {
    const auto [n, d] = shapes[i % 4];
    const StateSpace space(n, d);
    const auto states = space.cardinality();
    Rng pick(base.child("battery-size", i));
    const std::uint64_t max_support = std::min(states * states, 4 * states);
    const std::uint64_t support = 1 + pick.below(max_support);
    out.push_back(build_random(space, support, base.child("battery-coupling", i)));
  }
  return out;
}

BatteryResult run_monotonicity_battery(const BatteryConfig& cfg) {
  const auto couplings = random_battery(cfg.couplings, cfg.seed);
  struct Job {
    std::size_t coupling;
    int steps;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < couplings.size(); ++i) {
    for (int m : cfg.steps) jobs.push_back({i, m});
  }
  std::vector<RediRun> runs(jobs.size());
  SamplerOptions inner = cfg.sampler;
  inner.threads = 1;
  detail::parallel_for(jobs.size(), cfg.sampler.threads, [&](std::size_t j) {
    RectifyConfig rc;
    rc.grid = TimeGrid::uniform(jobs[j].steps);
    rc.sampler = inner;
    rc.method = ExactMethod{};
    runs[j] = redi_iterate(couplings[jobs[j].coupling], cfg.iterations,
                           std::span<const RectifyConfig>(&rc, 1));
  });

  BatteryResult res;
  res.runs = jobs.size();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& curve = runs[j].tc_curve;
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
      ++res.transitions_checked;
      res.max_increase = std::max(res.max_increase, curve[k + 1] - curve[k]);
      if (jobs[j].steps == 1) res.max_one_step_tc = std::max(res.max_one_step_tc, curve[k + 1]);
      if (curve[k + 1] > curve[k] + cfg.tolerance) {
        res.violations.push_back({jobs[j].coupling, jobs[j].steps, static_cast<int>(k), curve[k],
                                  curve[k + 1], runs[j].couplings[k]});
      }
    }
  }
  return res;
}

void write_counterexamples(std::ostream& out, const BatteryConfig& cfg, const BatteryResult& r) {
  out << "#redi monotonicity report v1\n";
  out << "seed=" << cfg.seed << " couplings=" << cfg.couplings << " iterations=" << cfg.iterations
      << " tolerance=" << format_double(cfg.tolerance) << " runs=" << r.runs
      << " transitions=" << r.transitions_checked << " violations=" << r.violations.size()
      << " max_increase=" << format_double(r.max_increase)
      << " max_one_step_tc=" << format_double(r.max_one_step_tc) << '\n';
  for (const auto& v : r.violations) {
    out << "violation coupling=" << v.coupling_index << " steps=" << v.steps
        << " iteration=" << v.iteration << " tc_before=" << format_double(v.tc_before)
        << " tc_after=" << format_double(v.tc_after) << '\n';
    write_coupling(out, v.before);
    out << "end\n";
  }
}

}  // namespace redi
