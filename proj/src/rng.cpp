#include "corrfield/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace corrfield {

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

Rng Rng::fork(std::uint64_t salt) const {
  std::uint64_t s = salt;
  std::uint64_t mixed = splitmix64(s);
  return Rng(seed_ ^ mixed);
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::runtime_error("Rng::uniform_int requires n > 0");
  std::uint64_t un = static_cast<std::uint64_t>(n);
  std::uint64_t bound = UINT64_MAX - UINT64_MAX % un;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= bound);
  return static_cast<int>(r % un);
}

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Eigen::Vector3d Rng::unit_vector() {
  for (;;) {
    Eigen::Vector3d v(normal(), normal(), normal());
    double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

}  // namespace corrfield
