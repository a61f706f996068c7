#pragma once

// Deterministic random streams. xoshiro256** seeded through SplitMix64, with a
// fixed seed-derivation chain so every task in a campaign owns an independent,
// replayable stream regardless of scheduling.

#include <array>
#include <cstdint>

namespace fiadla {

// One SplitMix64 output for state `x` (advance + finalize).
std::uint64_t splitmix64(std::uint64_t x);

class Rng {
 public:
  static constexpr const char* kAlgorithm = "xoshiro256**+splitmix64";

  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n must be > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();
  std::uint64_t poisson(double mean);
  std::uint64_t binomial(std::uint64_t n, double p);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class TaskKind : std::uint64_t {
  kMission = 1,
  kNoise = 2,
  kReliability = 3,
  kClassifier = 4,
  kMissionGen = 5,
  kSeu = 6,
  kPeFaults = 7,
  kDataset = 8,
};

// child = SplitMix64(master XOR mix(kind, a, b, c)).
std::uint64_t derive_seed(std::uint64_t master, TaskKind kind, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0);

// Bit pattern of a double, used to key streams by a real-valued parameter.
std::uint64_t double_bits(double x);

}  // namespace fiadla
