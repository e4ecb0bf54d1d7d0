#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <optional>
#include <sstream>
#include <utility>

#include "redi/analysis.hpp"
#include "redi/core.hpp"
#include "redi/errors.hpp"
#include "redi/flow.hpp"
#include "redi/io.hpp"
#include "redi/rectify.hpp"

namespace redi::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// key=value lines, in insertion order.
class Manifest {
 public:
  explicit Manifest(const std::vector<std::string>& args) {
    std::string line;
    for (const auto& a : args) {
      if (!line.empty()) line += ' ';
      line += a;
    }
    add("tool", std::string(kToolVersion));
    add("command", line);
  }

  void add(std::string key, std::string value) { lines_.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, double value) { add(std::move(key), format_double(value)); }
  void add(std::string key, std::uint64_t value) { add(std::move(key), std::to_string(value)); }
  void add(std::string key, int value) { add(std::move(key), std::to_string(value)); }

  void add_input(const std::string& name, const std::string& bytes) {
    add("input." + name + ".sha256", sha256_hex(bytes));
  }
  void add_output(const std::string& name, const std::string& bytes) {
    add("output." + name + ".sha256", sha256_hex(bytes));
  }

  std::string str() const {
    std::string out = "#redi manifest v1\n";
    for (const auto& [k, v] : lines_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> lines_;
};

// Flags shared by every subcommand.
struct Common {
  std::string schedule = "linear";
  std::string path = "coordinatewise";
  int threads = 1;
  std::uint64_t dense_cap = kDefaultDenseCap;

  void attach(CLI::App* app) {
    app->add_option("--schedule", schedule, "alpha schedule: linear | cosine | power:<p>")
        ->capture_default_str();
    app->add_option("--path", path, "conditional path: coordinatewise | holistic")
        ->capture_default_str();
    app->add_option("--threads", threads, "worker cap")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--dense-cap", dense_cap, "largest enumerable d^n")->capture_default_str();
  }

  SamplerOptions sampler(double tau) const {
    SamplerOptions o;
    o.schedule = AlphaSchedule::parse(schedule);
    o.mode = parse_path_mode(path);
    o.tau = tau;
    o.dense_cap = dense_cap;
    o.threads = threads;
    return o;
  }

  void record(Manifest& m) const {
    m.add("schedule", AlphaSchedule::parse(schedule).to_string());
    m.add("path", to_string(parse_path_mode(path)));
    m.add("threads", threads);
    m.add("dense_cap", dense_cap);
  }
};

std::string coupling_text(const PairCoupling& c) {
  std::ostringstream s;
  write_coupling(s, c);
  return s.str();
}

struct LoadedCoupling {
  PairCoupling coupling;
  std::string bytes;
};

LoadedCoupling load_input(const std::string& path) {
  std::string bytes = read_text_file(path);
  std::istringstream in(bytes);
  return {read_coupling(in), std::move(bytes)};
}

std::vector<SequenceState> non_mask_states(const StateSpace& space, std::uint64_t cap) {
  space.require_enumerable(cap, "builtin distribution");
  std::vector<SequenceState> out;
  for (std::uint64_t i = 0; i < space.cardinality(); ++i) {
    auto s = space.state_at(i);
    const auto mask = space.mask_token();
    if (mask && std::find(s.tokens.begin(), s.tokens.end(), *mask) != s.tokens.end()) continue;
    out.push_back(std::move(s));
  }
  return out;
}

// Builtins: uniform, diagonal (constant sequences), mask (all-mask point
// mass), fig1-source, fig1-target. Builtins avoid the mask token. Anything
// else is read as a distribution file.
SparseDistribution resolve_distribution(const std::string& spec, const std::optional<StateSpace>& space,
                                        std::uint64_t cap, Manifest& manifest,
                                        const std::string& role) {
  if (spec == "fig1-source") return fig1_source();
  if (spec == "fig1-target") return fig1_target();
  if (spec == "uniform" || spec == "diagonal" || spec == "mask") {
    if (!space) throw UsageError("builtin '" + spec + "' needs --n and --d");
    if (spec == "mask") return SparseDistribution::point_mass(*space, space->all_mask());
    std::vector<SequenceState> support;
    for (auto& s : non_mask_states(*space, cap)) {
      if (spec == "uniform" || std::all_of(s.tokens.begin(), s.tokens.end(),
                                           [&](Token v) { return v == s.tokens.front(); })) {
        support.push_back(std::move(s));
      }
    }
    return SparseDistribution::uniform(*space, support);
  }
  if (!fs::exists(spec)) throw UsageError("'" + spec + "' is neither a builtin nor a file");
  const std::string bytes = read_text_file(spec);
  manifest.add_input(role, bytes);
  std::istringstream in(bytes);
  return read_distribution(in);
}

void require_same_space(const StateSpace& a, const StateSpace& b, std::string_view what) {
  if (!(a == b)) {
    throw ValidationError(std::string(what) + ": state space " + b.header() + " does not match " +
                          a.header());
  }
}

// ---------------------------------------------------------------------------

struct MakeArgs {
  std::string kind;
  std::string out;
  std::optional<int> n, d;
  std::optional<int> mask;
  double r = 0.3;
  std::string source = "uniform";
  std::string target = "uniform";
  std::optional<std::uint64_t> support;
  std::uint64_t seed = 0;
  Common common;
  CLI::App* app = nullptr;
};

bool given(CLI::App* app, const std::string& flag) { return app->count(flag) > 0; }

void reject(CLI::App* app, const std::string& kind, std::initializer_list<const char*> flags) {
  for (const char* f : flags) {
    if (given(app, f)) throw UsageError(std::string(f) + " does not apply to 'make " + kind + "'");
  }
}

int cmd_make(const MakeArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  Manifest m(args);
  m.add("kind", a.kind);
  std::optional<StateSpace> space;
  if (a.n || a.d) {
    if (!a.n || !a.d) throw UsageError("--n and --d must be given together");
    space = StateSpace(*a.n, *a.d, a.mask ? std::optional<Token>(*a.mask) : std::nullopt);
  } else if (a.mask) {
    throw UsageError("--mask needs --n and --d");
  }

  std::optional<PairCoupling> c;
  if (a.kind == "fig1-pi0" || a.kind == "fig1-pi1") {
    reject(a.app, a.kind, {"--n", "--d", "--mask", "--r", "--source", "--target", "--support", "--seed"});
    c = build_fig1(a.kind == "fig1-pi0" ? Fig1Coupling::pi0 : Fig1Coupling::pi1);
  } else if (a.kind == "independent") {
    reject(a.app, a.kind, {"--r", "--support", "--seed"});
    const auto p0 = resolve_distribution(a.source, space, a.common.dense_cap, m, "source");
    const auto q1 = resolve_distribution(a.target, space, a.common.dense_cap, m, "target");
    require_same_space(p0.space(), q1.space(), "--target");
    m.add("source", a.source);
    m.add("target", a.target);
    c = build_independent(p0, q1);
  } else if (a.kind == "masked") {
    reject(a.app, a.kind, {"--source", "--support", "--seed"});
    if (!space || !a.mask) throw UsageError("'make masked' needs --n, --d and --mask");
    if (!(a.r >= 0.0 && a.r <= 1.0)) throw UsageError("--r must lie in [0, 1]");
    const auto q1 = resolve_distribution(a.target, space, a.common.dense_cap, m, "target");
    require_same_space(*space, q1.space(), "--target");
    m.add("r", a.r);
    m.add("target", a.target);
    c = build_masked_source(*space, a.r, q1, a.common.dense_cap);
  } else {  // random
    reject(a.app, a.kind, {"--r", "--source", "--target"});
    if (!space || !a.support) throw UsageError("'make random' needs --n, --d and --support");
    m.add("support", *a.support);
    m.add("seed", a.seed);
    c = build_random(*space, *a.support, RngSpec{a.seed, "make-random", 0});
  }
  if (space) m.add("space", space->header());
  m.add("dense_cap", a.common.dense_cap);

  const std::string text = coupling_text(*c);
  write_text_file(a.out, text);
  m.add_output(fs::path(a.out).filename().string(), text);
  write_text_file(a.out + ".manifest", m.str());
  out << "wrote " << a.out << " (" << c->size() << " entries)\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TcArgs {
  std::string input;
  double t = 0.0;
  double s = 1.0;
  std::string method = "exact";
  std::uint64_t roots = 5000;
  std::uint64_t samples = 10;
  std::uint64_t seed = 0;
  std::uint64_t support_cap = 1'000'000;
  std::string manifest;
  Common common;
};

int cmd_tc(const TcArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto in = load_input(a.input);
  const SamplerOptions o = a.common.sampler(1.0);
  TCReport r;
  if (a.method == "exact") {
    r = conditional_tc_exact(in.coupling, a.t, a.s, o.schedule, o.mode, a.support_cap);
  } else {
    PluginOptions p;
    p.roots = a.roots;
    p.samples_per_root = a.samples;
    p.rng = RngSpec{a.seed, "tc", 0};
    p.threads = a.common.threads;
    r = conditional_tc_plugin(in.coupling, a.t, a.s, o.schedule, o.mode, p);
  }
  const std::string csv =
      std::string(kMetricsVersionLine) + "\n" + std::string(kMetricsHeader) + "\n" + metrics_row(r) + "\n";
  out << csv;
  if (!a.manifest.empty()) {
    Manifest m(args);
    m.add_input("coupling", in.bytes);
    m.add("t", a.t);
    m.add("s", a.s);
    m.add("method", a.method);
    m.add("roots", a.roots);
    m.add("samples", a.samples);
    m.add("seed", a.seed);
    m.add("support_cap", a.support_cap);
    a.common.record(m);
    m.add_output("stdout", csv);
    write_text_file(a.manifest, m.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct RectifyArgs {
  std::string input;
  int steps = 16;
  int k = 1;
  std::string method = "exact";
  std::uint64_t pairs = 50000;
  double tau = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  double tc_t = 0.0;
  double tc_s = 1.0;
  std::uint64_t support_cap = 1'000'000;
  Common common;
};

int cmd_rectify(const RectifyArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto in = load_input(a.input);
  std::vector<RectifyConfig> cfgs;
  for (int k = 0; k < a.k; ++k) {
    RectifyConfig cfg;
    cfg.grid = TimeGrid::uniform(a.steps);
    cfg.sampler = a.common.sampler(a.tau);
    if (a.method == "exact") {
      cfg.method = ExactMethod{};
    } else {
      cfg.method = SampledMethod{a.pairs};
    }
    cfg.rng = RngSpec{a.seed, "rectify", static_cast<std::uint64_t>(k)};
    cfgs.push_back(std::move(cfg));
  }
  TcProbe probe;
  probe.t = a.tc_t;
  probe.s = a.tc_s;
  probe.support_cap = a.support_cap;
  probe.plugin.rng = RngSpec{a.seed, "tc-probe", 0};
  probe.plugin.threads = a.common.threads;

  RediRun run;
  try {
    if (a.method == "exact") in.coupling.space().require_enumerable(a.common.dense_cap, "exact rectification");
    run = redi_iterate(in.coupling, a.k, cfgs, probe);
  } catch (const CapError& e) {
    if (a.method == "exact") throw CapError(std::string(e.what()) + " (rerun with --method sampled)");
    throw;
  }

  fs::create_directories(a.out);
  Manifest m(args);
  m.add_input("coupling", in.bytes);
  m.add("steps", a.steps);
  m.add("k", a.k);
  m.add("method", a.method == "exact" ? std::string("exact") : describe(cfgs.front().method));
  m.add("pairs", a.pairs);
  m.add("tau", a.tau);
  m.add("seed", a.seed);
  m.add("tc_t", a.tc_t);
  m.add("tc_s", a.tc_s);
  m.add("support_cap", a.support_cap);
  a.common.record(m);

  std::string curve = "k,tc_nats,method\n";
  for (std::size_t k = 0; k < run.couplings.size(); ++k) {
    const std::string name = "pi_" + std::to_string(k) + ".redi";
    const std::string text = coupling_text(run.couplings[k]);
    write_text_file(fs::path(a.out) / name, text);
    m.add_output(name, text);
    curve += std::to_string(k) + "," + format_double(run.tc_curve[k]) + "," +
             to_string(run.tc_methods[k]) + "\n";
    m.add("tc." + std::to_string(k), run.tc_curve[k]);
  }
  write_text_file(fs::path(a.out) / "tc_curve.csv", curve);
  m.add_output("tc_curve.csv", curve);
  write_text_file(fs::path(a.out) / "manifest.txt", m.str());
  out << curve;
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string input;
  std::string target = "coupling";
  int steps = 16;
  std::string sampler = "exact";
  std::uint64_t n = 10000;
  double tau = 1.0;
  std::uint64_t seed = 0;
  std::string manifest;
  Common common;
};

SparseDistribution eval_target(const std::string& spec, const PairCoupling& c, std::uint64_t cap,
                               Manifest& m) {
  if (spec == "coupling") return coupling_marginal(c, Side::target);
  auto q = resolve_distribution(spec, c.space(), cap, m, "target");
  require_same_space(c.space(), q.space(), "--target");
  return q;
}

std::string eval_csv(const EvalReport& r) {
  return std::string(kMetricsVersionLine) + "\n" + std::string(kMetricsHeader) + "\n" + metrics_row(r) +
         "\n";
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto in = load_input(a.input);
  Manifest m(args);
  m.add_input("coupling", in.bytes);
  const auto target = eval_target(a.target, in.coupling, a.common.dense_cap, m);
  const auto sampler = a.sampler == "exact" ? EvalSampler::exact() : EvalSampler::monte_carlo(a.n);
  const auto report = eval_generation(in.coupling, TimeGrid::uniform(a.steps), target,
                                      a.common.sampler(a.tau), sampler, RngSpec{a.seed, "eval", 0});
  const std::string csv = eval_csv(report);
  out << csv;
  if (!a.manifest.empty()) {
    m.add("target", a.target);
    m.add("steps", a.steps);
    m.add("sampler", a.sampler);
    m.add("n", a.n);
    m.add("tau", a.tau);
    m.add("seed", a.seed);
    a.common.record(m);
    m.add_output("stdout", csv);
    write_text_file(a.manifest, m.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct OneStepArgs {
  std::string input;
  std::uint64_t n = 10000;
  std::uint64_t seed = 0;
  double tau = 1.0;
  std::string target = "coupling";
  std::string out;
  Common common;
};

int cmd_onestep(const OneStepArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto in = load_input(a.input);
  Manifest m(args);
  m.add_input("coupling", in.bytes);
  const auto target = eval_target(a.target, in.coupling, a.common.dense_cap, m);
  const RngSpec rng{a.seed, "onestep", 0};
  const auto samples = sample_one_step(one_step_model(in.coupling), a.n, rng, a.tau, a.common.threads);

  SparseDistribution::Map counts;
  for (const auto& s : samples) counts[s] += 1.0;
  auto report = evaluate_law(SparseDistribution::normalized(in.coupling.space(), std::move(counts)),
                             target, 1);
  report.seed = rng;
  const std::string csv = eval_csv(report);
  out << csv;

  std::ostringstream text;
  write_samples(text, in.coupling.space(), samples);
  write_text_file(a.out, text.str());
  m.add("n", a.n);
  m.add("seed", a.seed);
  m.add("tau", a.tau);
  m.add("target", a.target);
  a.common.record(m);
  m.add_output(fs::path(a.out).filename().string(), text.str());
  m.add_output("stdout", csv);
  write_text_file(a.out + ".manifest", m.str());
  return kOk;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string input;
  int steps = 16;
  std::uint64_t n = 32;
  double tau = 1.0;
  std::uint64_t seed = 0;
  std::string from;
  std::string out;
  Common common;
};

SequenceState parse_state_arg(const std::string& text, const StateSpace& space) {
  SequenceState s;
  std::istringstream in(text);
  long v = 0;
  while (in >> v) s.tokens.push_back(static_cast<Token>(v));
  if (!in.eof() || !space.contains(s)) throw UsageError("--from '" + text + "' is not a state of " + space.header());
  return s;
}

int cmd_sample(const SampleArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const auto in = load_input(a.input);
  const auto& c = in.coupling;
  const FlowModel model(c, a.common.sampler(a.tau));
  const TimeGrid grid = TimeGrid::uniform(a.steps);
  const RngSpec base{a.seed, "sample", 0};
  const auto source = coupling_marginal(c, Side::source);
  std::optional<SequenceState> from;
  if (!a.from.empty()) {
    from = parse_state_arg(a.from, c.space());
    if (source.prob(*from) <= 0.0) throw ZeroMassError("--from state has no source mass");
  }
  std::vector<double> weights;
  std::vector<SequenceState> states;
  for (const auto& [x, p] : source.entries()) {
    states.push_back(x);
    weights.push_back(p);
  }

  std::vector<std::vector<SequenceState>> paths(a.n);
  for (std::uint64_t j = 0; j < a.n; ++j) {
    Rng rng(base.child("sample-path", j));
    const SequenceState x0 = from ? *from : states[rng.categorical(weights)];
    model.trajectory(grid, x0, rng, &paths[j]);
  }
  std::ostringstream text;
  write_trajectories(text, c.space(), paths);
  write_text_file(a.out, text.str());

  Manifest m(args);
  m.add_input("coupling", in.bytes);
  m.add("steps", a.steps);
  m.add("n", a.n);
  m.add("tau", a.tau);
  m.add("seed", a.seed);
  m.add("from", a.from.empty() ? std::string("source") : from->to_string());
  a.common.record(m);
  m.add_output(fs::path(a.out).filename().string(), text.str());
  write_text_file(a.out + ".manifest", m.str());
  out << "wrote " << a.out << " (" << a.n << " trajectories, " << a.steps << " steps)\n";
  return kOk;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact laboratory for rectified discrete flow", "redi-lab"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  const std::vector<std::string> methods_tc{"exact", "plugin"};
  const std::vector<std::string> methods_rect{"exact", "sampled"};
  const std::vector<std::string> samplers{"exact", "mc"};

  MakeArgs mk;
  auto* make = app.add_subcommand("make", "build a coupling file");
  mk.app = make;
  make->add_option("kind", mk.kind, "independent | fig1-pi0 | fig1-pi1 | masked | random")
      ->required()
      ->check(CLI::IsMember({"independent", "fig1-pi0", "fig1-pi1", "masked", "random"}));
  make->add_option("--out", mk.out, "output coupling file")->required();
  make->add_option("--n", mk.n, "sequence length");
  make->add_option("--d", mk.d, "alphabet size");
  make->add_option("--mask", mk.mask, "mask token");
  make->add_option("--r", mk.r, "mass on the all-mask source state")->capture_default_str();
  make->add_option("--source", mk.source, "source distribution: builtin or file")->capture_default_str();
  make->add_option("--target", mk.target, "target distribution: builtin or file")->capture_default_str();
  make->add_option("--support", mk.support, "number of (x0, x1) pairs");
  make->add_option("--seed", mk.seed, "random seed")->capture_default_str();
  mk.common.attach(make);

  TcArgs tc;
  auto* tcc = app.add_subcommand("tc", "conditional total correlation");
  tcc->add_option("coupling", tc.input, "coupling file")->required();
  tcc->add_option("--t", tc.t, "conditioning time t")->capture_default_str();
  tcc->add_option("--s", tc.s, "target time s")->capture_default_str();
  tcc->add_option("--method", tc.method, "exact | plugin")->capture_default_str()->check(CLI::IsMember(methods_tc));
  tcc->add_option("--roots", tc.roots, "plug-in conditioning states")->capture_default_str();
  tcc->add_option("--samples", tc.samples, "samples per root")->capture_default_str();
  tcc->add_option("--seed", tc.seed, "random seed")->capture_default_str();
  tcc->add_option("--support-cap", tc.support_cap, "largest x_t support for exact TC")->capture_default_str();
  tcc->add_option("--manifest", tc.manifest, "write a run manifest here");
  tc.common.attach(tcc);

  RectifyArgs rc;
  auto* rect = app.add_subcommand("rectify", "iterate rectification");
  rect->add_option("coupling", rc.input, "coupling file")->required();
  rect->add_option("--steps", rc.steps, "sampling steps M")->capture_default_str()->check(CLI::PositiveNumber);
  rect->add_option("--k", rc.k, "iterations K")->capture_default_str()->check(CLI::PositiveNumber);
  rect->add_option("--method", rc.method, "exact | sampled")->capture_default_str()->check(CLI::IsMember(methods_rect));
  rect->add_option("--pairs", rc.pairs, "pairs P for --method sampled")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  rect->add_option("--tau", rc.tau, "sampling temperature")->capture_default_str();
  rect->add_option("--seed", rc.seed, "random seed")->capture_default_str();
  rect->add_option("--out", rc.out, "output directory")->required();
  rect->add_option("--tc-t", rc.tc_t, "TC probe time t")->capture_default_str();
  rect->add_option("--tc-s", rc.tc_s, "TC probe time s")->capture_default_str();
  rect->add_option("--support-cap", rc.support_cap, "largest x_t support for exact TC")->capture_default_str();
  rc.common.attach(rect);

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "quality of multi-step generation");
  evc->add_option("coupling", ev.input, "coupling file")->required();
  evc->add_option("--target", ev.target, "coupling | builtin | file")->capture_default_str();
  evc->add_option("--steps", ev.steps, "sampling steps M")->capture_default_str()->check(CLI::PositiveNumber);
  evc->add_option("--sampler", ev.sampler, "exact composition | monte carlo")->capture_default_str()->check(CLI::IsMember(samplers));
  evc->add_option("--n", ev.n, "draws for --sampler mc")->capture_default_str()->check(CLI::PositiveNumber);
  evc->add_option("--tau", ev.tau, "sampling temperature")->capture_default_str();
  evc->add_option("--seed", ev.seed, "random seed")->capture_default_str();
  evc->add_option("--manifest", ev.manifest, "write a run manifest here");
  ev.common.attach(evc);

  OneStepArgs os;
  auto* osc = app.add_subcommand("onestep", "sample the one-step factorized model");
  osc->add_option("coupling", os.input, "coupling file")->required();
  osc->add_option("--n", os.n, "samples")->capture_default_str()->check(CLI::PositiveNumber);
  osc->add_option("--seed", os.seed, "random seed")->capture_default_str();
  osc->add_option("--tau", os.tau, "sampling temperature")->capture_default_str();
  osc->add_option("--target", os.target, "coupling | builtin | file")->capture_default_str();
  osc->add_option("--out", os.out, "samples file")->required();
  os.common.attach(osc);

  SampleArgs sp;
  auto* spc = app.add_subcommand("sample", "dump multi-step trajectories");
  spc->add_option("coupling", sp.input, "coupling file")->required();
  spc->add_option("--steps", sp.steps, "sampling steps M")->capture_default_str()->check(CLI::PositiveNumber);
  spc->add_option("--n", sp.n, "trajectories")->capture_default_str()->check(CLI::PositiveNumber);
  spc->add_option("--tau", sp.tau, "sampling temperature")->capture_default_str();
  spc->add_option("--seed", sp.seed, "random seed")->capture_default_str();
  spc->add_option("--from", sp.from, "start every trajectory here, e.g. \"2 2\"");
  spc->add_option("--out", sp.out, "trajectories file")->required();
  sp.common.attach(spc);

  std::vector<const char*> argv{"redi-lab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*make) return cmd_make(mk, args, out);
    if (*tcc) return cmd_tc(tc, args, out);
    if (*rect) return cmd_rectify(rc, args, out);
    if (*evc) return cmd_eval(ev, args, out);
    if (*osc) return cmd_onestep(os, args, out);
    if (*spc) return cmd_sample(sp, args, out);
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}

}  // namespace redi::cli
