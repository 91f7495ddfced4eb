#include "tppf/rng.hpp"

namespace tppf {

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, StreamTag tag, std::uint64_t replicate,
                          std::uint64_t particle) noexcept {
  const auto t = static_cast<std::uint64_t>(tag);
  std::uint64_t s = mix64(master ^ (t * 0x9E3779B97F4A7C15ULL));
  s = mix64(s + replicate * 0xD1B54A32D192ED03ULL);
  s = mix64(s + particle * 0x8CB92BA72F3D8DD7ULL);
  return s;
}

}  // namespace tppf
