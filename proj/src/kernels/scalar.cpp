#include "poolrank/kernels.hpp"

namespace poolrank::kernels::scalar {

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept {
  double acc = 0.0;
  for (const auto i : idx) acc += values[i];
  return acc;
}

}  // namespace poolrank::kernels::scalar
