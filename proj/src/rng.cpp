#include "pimeta/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pimeta/stats.hpp"

namespace pimeta {

namespace {
std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x1234567890abcdefULL));
}

double Rng::uniform() {
  // 53-bit mantissa, offset by half an ulp so 0 and 1 are excluded.
  return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::exponential(double mean) {
  if (mean <= 0.0) throw std::invalid_argument("exponential mean must be > 0");
  return -mean * std::log(uniform());
}

double Rng::normal() { return normal_quantile(uniform()); }

int Rng::geometric(double x) {
  if (!(x > 0.0 && x < 1.0))
    throw std::invalid_argument("geometric parameter must lie in (0,1)");
  const double k = std::floor(std::log(uniform()) / std::log(x));
  if (k >= static_cast<double>(std::numeric_limits<int>::max())) {
    return std::numeric_limits<int>::max();
  }
  return static_cast<int>(k);
}

}  // namespace pimeta
