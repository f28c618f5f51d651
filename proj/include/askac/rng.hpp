#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace askac {

// Seeded random stream. Every consumer of randomness (env resets, action
// sampling, meta decisions, minibatch shuffles, noisy advisors) owns its own
// forked stream so that switching one feature off never shifts another's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent child stream; deterministic in (seed, stream).
  Rng fork(std::uint64_t stream) const;

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  std::size_t index(std::size_t n);       // uniform over [0, n)
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Named stream ids used across the trainer.
namespace streams {
inline constexpr std::uint64_t kActorInit = 1;
inline constexpr std::uint64_t kCriticInit = 2;
inline constexpr std::uint64_t kRequesterInit = 3;
inline constexpr std::uint64_t kEnvReset = 4;
inline constexpr std::uint64_t kActionSample = 5;
inline constexpr std::uint64_t kMetaDecision = 6;
inline constexpr std::uint64_t kMinibatch = 7;
inline constexpr std::uint64_t kAdvisorNoise = 8;
inline constexpr std::uint64_t kEvaluation = 9;
}  // namespace streams

}  // namespace askac
