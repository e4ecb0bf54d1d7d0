#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "redi/core.hpp"
#include "redi/rectify.hpp"
#include "redi/rng.hpp"

namespace testing {

inline redi::SequenceState st(const std::string& text) {
  redi::SequenceState s;
  for (char ch : text) {
    if (ch != ' ') s.tokens.push_back(ch - '0');
  }
  return s;
}

inline redi::StateSpace bits2() { return redi::StateSpace(2, 2); }

/// A coupling with full source support: every x_t at 0 < t < 1 is on-path,
/// so the dense oracle applies to multi-step composition.
inline redi::PairCoupling full_source_coupling(const redi::StateSpace& space, std::uint64_t seed) {
  redi::Rng rng(redi::RngSpec{seed, "test-full-source", 0});
  std::vector<redi::CouplingEntry> entries;
  for (std::uint64_t a = 0; a < space.cardinality(); ++a) {
    for (std::uint64_t b = 0; b < space.cardinality(); ++b) {
      if (rng.uniform() < 0.4 || b == (a * 7 + 3) % space.cardinality()) {
        entries.push_back({space.state_at(a), space.state_at(b), 0.05 + rng.uniform()});
      }
    }
  }
  return redi::normalize_coupling(redi::PairCoupling(space, std::move(entries)));
}

/// A coupling whose every conditional is a product over dimensions.
inline redi::PairCoupling product_conditional_coupling(const redi::StateSpace& space,
                                                        std::uint64_t seed) {
  redi::Rng rng(redi::RngSpec{seed, "test-product", 0});
  const auto n = static_cast<std::size_t>(space.n());
  const auto d = static_cast<std::size_t>(space.d());
  std::vector<redi::CouplingEntry> entries;
  for (std::uint64_t a = 0; a < space.cardinality(); ++a) {
    if (rng.uniform() < 0.3) continue;
    const double pa = 0.1 + rng.uniform();
    std::vector<double> tables(n * d);
    for (auto& w : tables) w = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    for (std::size_t i = 0; i < n; ++i) tables[i * d] += 0.01;
    for (std::uint64_t b = 0; b < space.cardinality(); ++b) {
      const auto x1 = space.state_at(b);
      double w = pa;
      for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t v = 0; v < d; ++v) row += tables[i * d + v];
        w *= tables[i * d + static_cast<std::size_t>(x1[i])] / row;
      }
      if (w > 0.0) entries.push_back({space.state_at(a), x1, w});
    }
  }
  return redi::normalize_coupling(redi::PairCoupling(space, std::move(entries)));
}

}  // namespace testing
