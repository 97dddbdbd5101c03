#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace egal {

/// SplitMix64 finalizer. Used to derive independent stream seeds from one
/// user seed so that every component gets its own generator.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `stream` of a run seeded with `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Named streams. Adding a stream never perturbs the others.
enum class Stream : std::uint64_t {
  kSynth = 1,
  kSubsample = 2,
  kLengthScale = 3,
  kSession = 4,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream s) noexcept {
  return derive_seed(seed, static_cast<std::uint64_t>(s));
}

/// Mersenne twister with portable conversions to uniform doubles and
/// indices. The std distributions are implementation-defined, these are not,
/// which keeps trajectories stable across standard libraries.
class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform index in [0, n). Lemire's nearly-divisionless rejection.
  std::size_t index(std::size_t n) {
    const std::uint64_t range = n;
    unsigned __int128 m = static_cast<unsigned __int128>(engine_()) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range) {
      const std::uint64_t threshold = (0 - range) % range;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(engine_()) * range;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::size_t>(m >> 64);
  }

  engine_type& engine() { return engine_; }

  std::string save_state() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
  }

  void restore_state(const std::string& state) {
    std::istringstream in(state);
    in >> engine_;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  engine_type engine_;
};

}  // namespace egal
