// Seeded property suites over random couplings.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "redi/analysis.hpp"
#include "redi/io.hpp"
#include "redi/rectify.hpp"

using namespace redi;

namespace {

const std::vector<AlphaSchedule>& schedules() {
  static const std::vector<AlphaSchedule> s{AlphaSchedule::linear(), AlphaSchedule::cosine(),
                                            AlphaSchedule::power(2.0), AlphaSchedule::power(0.5)};
  return s;
}

constexpr PathMode kModes[] = {PathMode::coordinatewise, PathMode::holistic};

std::vector<PairCoupling> cases(std::size_t count, std::uint64_t seed) { return random_battery(count, seed); }

}  // namespace

TEST_SUITE("properties") {
  TEST_CASE("normalization is idempotent, order-insensitive and exact") {
    Rng rng(RngSpec{1, "prop-norm", 0});
    for (const auto& c : cases(40, 11)) {
      CHECK(normalize_coupling(c) == c);
      CHECK(std::abs(c.total_weight() - 1.0) <= 1e-12);
      std::vector<CouplingEntry> raw(c.entries().begin(), c.entries().end());
      for (auto& e : raw) e.weight *= 3.7;
      for (int rep = 0; rep < 5; ++rep) {
        for (std::size_t i = raw.size(); i > 1; --i) std::swap(raw[i - 1], raw[rng.below(i)]);
        const auto n = normalize_coupling(PairCoupling(c.space(), raw));
        CHECK(n == normalize_coupling(PairCoupling(c.space(), raw)));
        CHECK(std::abs(n.total_weight() - 1.0) <= 1e-12);
        REQUIRE(n.size() == c.size());
        for (std::size_t i = 0; i < n.size(); ++i) CHECK(std::abs(n.entries()[i].weight - c.entries()[i].weight) <= 1e-15);
        if (rep == 0) {
          const auto first = n;
          std::reverse(raw.begin(), raw.end());
          CHECK(normalize_coupling(PairCoupling(c.space(), raw)) == first);
        }
      }
      for (auto side : {Side::source, Side::target}) {
        CHECK(std::abs(coupling_marginal(c, side).total() - 1.0) <= 1e-12);
      }
      const auto dense = DenseDistribution::from_sparse(coupling_marginal(c, Side::target));
      double total = 0.0;
      for (double w : dense.weights()) total += w;
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("bridge law of total probability on a (t, s) grid") {
    const double grid[] = {0.0, 0.1, 0.25, 0.5, 0.6, 0.9, 1.0};
    for (const auto& a : schedules()) {
      for (double t : grid)
        for (double s : grid) {
          if (!(s > t)) continue;
          const double at = alpha_at(a, t), as = alpha_at(a, s);
          if (at < 1.0) CHECK(std::abs(at + (1 - at) * switch_probability(t, s, a) - as) <= 1e-12);
        }
    }
    const auto pairs = cases(12, 12);
    for (const auto& c : pairs) {
      const StateSpace& sp = c.space();
      for (const auto& e : c.entries()) {
        for (PathMode mode : kModes) {
          for (const auto& a : schedules()) {
            for (double t : grid)
              for (double s : grid) {
                if (!(s > t)) continue;
                // sum_{x_t} p_t(x_t | x0, x1) p(x_s | x_t, x0, x1) = p_s(x_s | x0, x1)
                std::vector<double> lhs(sp.cardinality(), 0.0);
                for (std::uint64_t i = 0; i < sp.cardinality(); ++i) {
                  const auto xt = sp.state_at(i);
                  const double w = path_weight(xt, e.x0, e.x1, t, a, mode);
                  if (w == 0.0) continue;
                  const auto b = bridge(e.x0, e.x1, xt, t, s, a, mode);
                  for (std::uint64_t j = 0; j < sp.cardinality(); ++j) lhs[j] += w * b.prob(sp.state_at(j));
                }
                for (std::uint64_t j = 0; j < sp.cardinality(); ++j) {
                  CHECK(std::abs(lhs[j] - path_weight(sp.state_at(j), e.x0, e.x1, s, a, mode)) <= 1e-12);
                }
              }
          }
        }
        break;  // one pair per coupling keeps the suite fast
      }
    }
  }

  TEST_CASE("factorized tables equal the marginals of the exact transition") {
    for (const auto& c : cases(24, 13)) {
      for (PathMode mode : kModes) {
        for (auto [t, s] : {std::pair{0.0, 1.0}, std::pair{0.2, 0.7}, std::pair{0.5, 1.0}}) {
          const auto& a = schedules()[static_cast<std::size_t>(c.size()) % schedules().size()];
          for (const auto pt = path_marginal(c, t, a, mode); const auto& [xt, w] : pt.entries()) {
            const auto post = posterior(c, xt, t, a, mode);
            for (const auto& e : post.entries) {
              CHECK(std::any_of(c.entries().begin(), c.entries().end(),
                                [&](const CouplingEntry& f) { return f.x0 == e.x0 && f.x1 == e.x1; }));
            }
            const auto joint = exact_transition(c, xt, t, s, a, mode);
            const auto k = factorized_transition(c, xt, t, s, a, mode);
            const auto n = static_cast<std::size_t>(c.space().n());
            const auto d = static_cast<std::size_t>(c.space().d());
            std::vector<double> m(n * d, 0.0);
            double total = 0.0;
            for (const auto& [x, p] : joint.entries()) {
              total += p;
              for (std::size_t i = 0; i < n; ++i) m[i * d + static_cast<std::size_t>(x[i])] += p;
            }
            CHECK(std::abs(total - 1.0) <= 1e-12);
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t v = 0; v < d; ++v)
                CHECK(std::abs(k.prob(i, static_cast<Token>(v)) - m[i * d + v]) <= 1e-12);
          }
        }
      }
    }
  }

  TEST_CASE("single-KL identity") {
    for (const auto& c : cases(60, 14)) {
      for (PathMode mode : kModes) {
        const double expected = conditional_tc_exact(c, 0.0, 1.0, AlphaSchedule::linear(), mode).value_nats;
        CHECK(std::abs(conditional_tc_single_kl(c) - expected) <= 1e-12);
        CHECK(expected >= 0.0);
      }
    }
  }

  TEST_CASE("source marginal preserved by exact rectification") {
    for (const auto& c : cases(24, 15)) {
      const auto p = coupling_marginal(c, Side::source);
      for (int m : {1, 2, 4}) {
        RectifyConfig cfg;
        cfg.grid = TimeGrid::uniform(m);
        const auto q = coupling_marginal(rectify_exact(c, cfg), Side::source);
        REQUIRE(q.support_size() == p.support_size());
        for (const auto& [x, w] : p.entries()) CHECK(std::abs(q.prob(x) - w) <= 1e-12);
      }
    }
  }

  TEST_CASE("file round trips") {
    for (const auto& c : cases(30, 16)) {
      std::ostringstream out;
      write_coupling(out, c);
      std::istringstream in(out.str());
      CHECK(read_coupling(in) == c);
      RectifyConfig cfg;
      cfg.grid = TimeGrid::uniform(2);
      const auto k = exact_multistep_conditional(c, cfg.grid, cfg.sampler);
      std::ostringstream kout;
      write_kernel(kout, k);
      std::istringstream kin(kout.str());
      CHECK(read_kernel(kin) == k);
    }
  }

  TEST_CASE("seeded results do not depend on worker count") {
    for (const auto& c : cases(4, 17)) {
      RectifyConfig one;
      one.grid = TimeGrid::uniform(4);
      one.method = SampledMethod{3000};
      one.rng = RngSpec{5, "prop", 0};
      RectifyConfig many = one;
      many.sampler.threads = 3;
      CHECK(rectify_sampled(c, one) == rectify_sampled(c, many));

      PluginOptions po;
      po.roots = 300;
      po.rng = RngSpec{6, "prop", 0};
      const double a = conditional_tc_plugin(c, 0.2, 0.8, AlphaSchedule::linear(), PathMode::coordinatewise, po).value_nats;
      po.threads = 4;
      CHECK(conditional_tc_plugin(c, 0.2, 0.8, AlphaSchedule::linear(), PathMode::coordinatewise, po).value_nats == a);

      SamplerOptions so;
      const auto law1 = generated_law(c, TimeGrid::uniform(3), so, EvalSampler::monte_carlo(2000), RngSpec{7, "p", 0});
      so.threads = 4;
      CHECK(generated_law(c, TimeGrid::uniform(3), so, EvalSampler::monte_carlo(2000), RngSpec{7, "p", 0}).entries() ==
            law1.entries());
    }
  }
}
