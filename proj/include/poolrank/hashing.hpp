#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace poolrank {

/// SplitMix64 finalizer.
[[nodiscard]] constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stable 64-bit key from a seed and a string identifier (FNV-1a over the
/// bytes, then mixed with the seed). Independent of platform and std::hash.
[[nodiscard]] std::uint64_t hash64(std::uint64_t seed, std::string_view id) noexcept;

/// Counter-based generator: the i-th output depends only on (key, i), so
/// streams can be split or replayed without carrying state between users.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  [[nodiscard]] constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter));
  }

  constexpr std::uint64_t next() noexcept { return at(counter_++); }

  /// Uniform integer in [0, bound) by multiply-shift on the high 32 bits.
  constexpr std::uint32_t below(std::uint32_t bound) noexcept {
    const auto r = static_cast<std::uint32_t>(next() >> 32);
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(r) * bound) >> 32);
  }

  [[nodiscard]] constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Lowercase hex SHA-256 of a byte string.
[[nodiscard]] std::string sha256_hex(std::string_view bytes);

/// Lowercase hex SHA-256 of a file's contents. Throws IoError.
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

/// Fisher-Yates permutation of {0..n-1} driven by CounterRng(key).
[[nodiscard]] std::vector<int> seeded_permutation(int n, std::uint64_t key);

}  // namespace poolrank
