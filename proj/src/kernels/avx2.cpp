// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "poolrank/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace poolrank::kernels::avx2 {

namespace {
inline double hsum(__m256d v) noexcept {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}
}  // namespace

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  const std::size_t n = a.size();
  const double* pa = a.data();
  const double* pb = b.data();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i), _mm256_loadu_pd(pb + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i + 4), _mm256_loadu_pd(pb + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa + i), _mm256_loadu_pd(pb + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += pa[i] * pb[i];
  return acc;
}

double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept {
  const std::size_t n = idx.size();
  const double* base = values.data();
  const auto* pi = reinterpret_cast<const __m128i*>(idx.data());
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8, pi += 2) {
    acc0 = _mm256_add_pd(acc0, _mm256_i32gather_pd(base, _mm_loadu_si128(pi), 8));
    acc1 = _mm256_add_pd(acc1, _mm256_i32gather_pd(base, _mm_loadu_si128(pi + 1), 8));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += base[idx[i]];
  return acc;
}

}  // namespace poolrank::kernels::avx2

#else

namespace poolrank::kernels::avx2 {
double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return scalar::dot(a, b);
}
double gather_sum(std::span<const double> values, std::span<const std::uint32_t> idx) noexcept {
  return scalar::gather_sum(values, idx);
}
}  // namespace poolrank::kernels::avx2

#endif
