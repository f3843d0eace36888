#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace meanviab {

// Philox4x32-10 counter-based generator (Salmon et al. constants).
// Every draw is addressed by (key, counter); there is no sequential state,
// so per-path substreams are deterministic under any parallel schedule.
struct Philox4x32 {
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic child seed for a labelled sub-operation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label) {
  return splitmix64(seed ^ splitmix64(label));
}

/// Random-access stream of N(0,1) pairs keyed by (seed, stream, path).
/// normal_pair(step, call) is a pure function of its arguments.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t stream, std::uint64_t path_index) {
    const std::uint64_t k = splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 32));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
    ctr01_ = {static_cast<std::uint32_t>(path_index),
              static_cast<std::uint32_t>(path_index >> 32)};
  }

  std::array<double, 2> normal_pair(std::uint32_t step, std::uint32_t call) const {
    const auto r = Philox4x32::block({ctr01_[0], ctr01_[1], step, call}, key_);
    const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    const std::uint64_t b = (static_cast<std::uint64_t>(r[2]) << 32) | r[3];
    // u1 in (0,1], u2 in [0,1): Box-Muller stays finite.
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 6.283185307179586476925286766559 * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  /// Uniform in [0,1).
  double uniform(std::uint32_t step, std::uint32_t call) const {
    const auto r = Philox4x32::block({ctr01_[0], ctr01_[1], step, call | 0x80000000u}, key_);
    const std::uint64_t a = (static_cast<std::uint64_t>(r[0]) << 32) | r[1];
    return static_cast<double>(a >> 11) * 0x1.0p-53;
  }

 private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> ctr01_;
};

}  // namespace meanviab
