#include "poolrank/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace poolrank::kernels::neon {

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  const std::size_t n = a.size();
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a.data() + i), vld1q_f64(b.data() + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a.data() + i + 2), vld1q_f64(b.data() + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// No gather instruction: two-lane accumulation of scalar loads.
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept {
  const std::size_t n = idx.size();
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const double pair[2] = {values[idx[i]], values[idx[i + 1]]};
    acc = vaddq_f64(acc, vld1q_f64(pair));
  }
  double total = vaddvq_f64(acc);
  for (; i < n; ++i) total += values[idx[i]];
  return total;
}

}  // namespace poolrank::kernels::neon

#else

namespace poolrank::kernels::neon {
double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return scalar::dot(a, b);
}
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept {
  return scalar::gather_sum(values, idx);
}
}  // namespace poolrank::kernels::neon

#endif
