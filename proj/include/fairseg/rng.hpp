#pragma once

#include <cstdint>
#include <string_view>

namespace fairseg {

// PCG32 (XSH-RR, 64-bit state, 32-bit output). Output is a pure function of
// (state, increment), so sequences match on every platform.
class Pcg32 {
 public:
  static constexpr std::uint32_t kAlgorithmId = 0x50434732;  // "PCG2"

  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, bound).
  std::uint32_t below(std::uint32_t bound);
  // Standard normal via Box-Muller; no cached second value so state fully
  // describes the generator.
  double normal();

  std::uint64_t state() const noexcept { return state_; }
  std::uint64_t increment() const noexcept { return inc_; }
  static Pcg32 from_raw(std::uint64_t state, std::uint64_t increment);

  friend bool operator==(const Pcg32&, const Pcg32&) = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
};

using Rng = Pcg32;

std::uint64_t splitmix64(std::uint64_t x);

// Order-independent sub-stream seeds: hash(seed, label[, index...]).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t a,
                          std::uint64_t b);

inline Rng make_stream(std::uint64_t seed, std::string_view label) {
  return Rng(derive_seed(seed, label));
}

}  // namespace fairseg
