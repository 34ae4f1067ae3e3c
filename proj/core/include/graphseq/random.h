#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace graphseq {

// Combines several integers into one well-mixed 64-bit seed (splitmix64).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

// std::mt19937_64 with distribution code kept here, so sequences are
// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer on [0, n).
  int uniform_int(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }
  double normal();

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace graphseq
