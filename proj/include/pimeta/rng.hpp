#pragma once

#include <cstdint>
#include <random>

namespace pimeta {

// Derives an independent stream seed from a master seed via splitmix64.
// Used everywhere a component needs its own reproducible stream (one per
// design point, per repetition, per tree, ...), so results do not depend
// on scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Seeded random source. All continuous draws go through explicit
// inverse-CDF transforms on top of mt19937_64, so a fixed seed yields
// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform strictly inside (0,1); 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  double exponential(double mean);
  // Standard normal via the inverse CDF.
  double normal();
  // P(K = k) = (1 - x) x^k for k = 0,1,2,...
  int geometric(double x);

 private:
  std::mt19937_64 gen_;
};

}  // namespace pimeta
