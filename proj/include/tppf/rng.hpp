#pragma once

#include <cstdint>
#include <random>

namespace tppf {

// Purpose tags for seed derivation. Values are part of the reproducibility
// contract; never renumber.
enum class StreamTag : std::uint64_t {
  dataset = 1,
  filter = 2,
  training = 3,
  iapf = 4,
  oracle = 5,
  normalizer = 6,
  test = 7,
};

/// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Child seed for (tag, replicate, particle) under a master seed:
///   s0 = mix64(master ^ (tag * 0x9E3779B97F4A7C15))
///   s1 = mix64(s0 + replicate * 0xD1B54A32D192ED03)
///   s2 = mix64(s1 + particle  * 0x8CB92BA72F3D8DD7)
/// Each stage is a bijection in its new argument, so distinct replicate
/// (resp. particle) indices give distinct seeds for fixed prefixes.
std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t replicate = 0,
                          std::uint64_t particle = 0) noexcept;

struct SeedSpec {
  std::uint64_t master = 0;

  std::uint64_t derive(StreamTag tag, std::uint64_t replicate = 0, std::uint64_t particle = 0) const {
    return derive_seed(master, tag, replicate, particle);
  }
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(const SeedSpec& spec, StreamTag tag, std::uint64_t replicate = 0, std::uint64_t particle = 0)
      : engine_(spec.derive(tag, replicate, particle)) {}

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace tppf
