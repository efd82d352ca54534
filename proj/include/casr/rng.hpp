#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace casr {

/// xoshiro256** generator. The whole state is four words so it can be
/// checkpointed verbatim. Satisfies UniformRandomBitGenerator.
class Rng {
 public:
  using result_type = std::uint64_t;
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);
  static Rng from_state(const State& state);

  // Independent stream for `name` under `seed`, e.g. Rng::stream(seed, "init").
  static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  std::uint64_t below(std::uint64_t bound);  // [0, bound), bound > 0
  double normal();                           // standard normal, no cached spare

  const State& state() const { return state_; }

 private:
  State state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

}  // namespace casr
