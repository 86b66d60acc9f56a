#pragma once

// Data-parallel inner loops used by the semantic metrics (dot products over
// embedding vectors) and the bootstrap (index-gathered sums over per-cluster
// deltas). Each kernel has a scalar reference and optional SIMD variants;
// the active variant is chosen once at runtime from CPU features.
//
// POOLRANK_ISA=scalar|avx2|neon in the environment forces a variant (falls
// back to scalar if the requested one is unavailable).

#include <cstdint>
#include <span>
#include <string_view>

namespace poolrank::kernels {

enum class Isa { scalar, avx2, neon };

[[nodiscard]] std::string_view isa_name(Isa isa) noexcept;

/// Variant used by the dispatched entry points below.
[[nodiscard]] Isa active_isa() noexcept;

/// Whether a variant is compiled in and supported by this CPU.
[[nodiscard]] bool isa_available(Isa isa) noexcept;

/// Sum of a[i] * b[i]. Precondition: a.size() == b.size().
[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// Sum of values[idx[i]]. Precondition: every idx[i] < values.size().
[[nodiscard]] double gather_sum(std::span<const double> values,
                                std::span<const std::uint32_t> idx) noexcept;

// Per-variant entry points, exposed for equivalence testing. Calling a
// variant that is not available is undefined.
namespace scalar {
double dot(std::span<const double> a, std::span<const double> b) noexcept;
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept;
}  // namespace scalar

namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b) noexcept;
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept;
}  // namespace avx2

namespace neon {
double dot(std::span<const double> a, std::span<const double> b) noexcept;
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept;
}  // namespace neon

}  // namespace poolrank::kernels
