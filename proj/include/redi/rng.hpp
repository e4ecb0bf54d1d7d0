#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace redi {

/// Names one reproducible random stream. Two specs with equal fields always
/// produce the same draws, independent of thread count or call order
/// elsewhere.
struct RngSpec {
  std::uint64_t seed = 0;
  std::string purpose = "main";
  std::uint64_t index = 0;

  /// Substream for work item `i` under a new purpose label.
  RngSpec child(std::string child_purpose, std::uint64_t i) const;

  /// 64-bit key mixing seed, purpose and index.
  std::uint64_t key() const;

  bool operator==(const RngSpec&) const = default;
};

/// mt19937_64 (output fixed by the standard) with portable conversions.
/// std::uniform_real_distribution is deliberately avoided because its output
/// is implementation-defined.
class Rng {
 public:
  explicit Rng(const RngSpec& spec);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Index drawn proportionally to nonnegative weights (need not sum to 1).
  std::size_t categorical(std::span<const double> weights);

 private:
  std::mt19937_64 engine_;
};

}  // namespace redi
