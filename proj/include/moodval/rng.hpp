#pragma once

#include <cstdint>
#include <random>

namespace moodval {

/// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// mt19937_64 with hand-written distributions so sequences are identical
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);
  double normal();                          // N(0, 1), Box-Muller
  std::uint64_t below(std::uint64_t bound); // [0, bound)

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::iter_swap(first + static_cast<std::ptrdiff_t>(i - 1),
                     first + static_cast<std::ptrdiff_t>(below(i)));
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace moodval
