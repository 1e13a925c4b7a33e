#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace span_rl {

// Independent random streams derived from one run seed.
enum class Stream : std::uint64_t {
  kEnvReset = 1,
  kEvalReset = 2,
  kPolicy = 3,
  kInit = 4,
  kReplay = 5,
  kShuffle = 6,
  kNoise = 7,
  kProbe = 8,
};

// Philox4x32-10 counter-based generator. The full state is (key, counter,
// buffer position), so a stream is reproducible from (seed, stream, counter)
// alone and independent of any platform library.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0);
  Philox(std::uint64_t seed, Stream stream, std::uint64_t counter = 0)
      : Philox(seed, static_cast<std::uint64_t>(stream), counter) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (one draw per call, no cached pair).
  double normal();
  // Uniform integer on [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }
  // Jump to block `counter`; discards any buffered output.
  void seek(std::uint64_t counter);

  // Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

// Mixes (seed, tag) into a new 64-bit seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace span_rl
