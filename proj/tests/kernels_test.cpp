#include <cmath>
#include <ostream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "poolrank/kernels.hpp"

namespace pk = poolrank::kernels;

namespace poolrank::kernels {
void PrintTo(Isa isa, std::ostream* os) { *os << isa_name(isa); }
}  // namespace poolrank::kernels

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Relative tolerance: variants may reassociate the sum.
double tol(std::span<const double> a, std::span<const double> b) {
  double mag = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mag += std::abs(a[i] * b[i]);
  return 1e-12 * (1.0 + mag);
}

}  // namespace

TEST(Kernels, ScalarDotMatchesNaiveLoop) {
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(pk::scalar::dot(a, b), 35.0);
  EXPECT_DOUBLE_EQ(pk::scalar::dot({}, {}), 0.0);
}

TEST(Kernels, ScalarGatherSum) {
  const std::vector<double> v{0.5, 1.5, -2.0};
  const std::vector<std::uint32_t> idx{2, 0, 0, 1};
  EXPECT_DOUBLE_EQ(pk::scalar::gather_sum(v, idx), -2.0 + 0.5 + 0.5 + 1.5);
}

TEST(Kernels, ScalarIsAlwaysAvailable) {
  EXPECT_TRUE(pk::isa_available(pk::Isa::scalar));
  EXPECT_TRUE(pk::isa_available(pk::active_isa()));
  EXPECT_EQ(pk::isa_name(pk::Isa::avx2), "avx2");
}

class KernelVariant : public ::testing::TestWithParam<pk::Isa> {};

TEST_P(KernelVariant, DotMatchesScalarOnAllLengths) {
  const auto isa = GetParam();
  if (!pk::isa_available(isa)) GTEST_SKIP() << pk::isa_name(isa) << " not available";
  auto fn = isa == pk::Isa::avx2 ? &pk::avx2::dot : &pk::neon::dot;
  std::mt19937_64 rng(7);
  for (std::size_t n = 0; n <= 67; ++n) {
    const auto a = random_vector(rng, n);
    const auto b = random_vector(rng, n);
    EXPECT_NEAR(fn(a, b), pk::scalar::dot(a, b), tol(a, b)) << "n=" << n;
  }
  const auto a = random_vector(rng, 384);
  const auto b = random_vector(rng, 384);
  EXPECT_NEAR(fn(a, b), pk::scalar::dot(a, b), tol(a, b));
}

TEST_P(KernelVariant, GatherSumMatchesScalar) {
  const auto isa = GetParam();
  if (!pk::isa_available(isa)) GTEST_SKIP() << pk::isa_name(isa) << " not available";
  auto fn = isa == pk::Isa::avx2 ? &pk::avx2::gather_sum : &pk::neon::gather_sum;
  std::mt19937_64 rng(11);
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 17u, 345u, 1000u}) {
    const auto v = random_vector(rng, n);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    for (std::size_t m : {0u, 1u, 3u, 4u, 7u, 345u}) {
      std::vector<std::uint32_t> idx(m);
      for (auto& i : idx) i = pick(rng);
      double mag = 0.0;
      for (auto i : idx) mag += std::abs(v[i]);
      EXPECT_NEAR(fn(v, idx), pk::scalar::gather_sum(v, idx), 1e-12 * (1.0 + mag))
          << "n=" << n << " m=" << m;
    }
  }
}

TEST_P(KernelVariant, ZeroSumIsExact) {
  // Bootstrap degeneracy relies on gathering zeros giving exactly zero.
  const auto isa = GetParam();
  if (!pk::isa_available(isa)) GTEST_SKIP();
  auto fn = isa == pk::Isa::avx2 ? &pk::avx2::gather_sum : &pk::neon::gather_sum;
  const std::vector<double> zeros(345, 0.0);
  std::vector<std::uint32_t> idx(345);
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = (i * 37) % 345;
  EXPECT_EQ(fn(zeros, idx), 0.0);
}

INSTANTIATE_TEST_SUITE_P(Simd, KernelVariant, ::testing::Values(pk::Isa::avx2, pk::Isa::neon),
                         [](const auto& info) { return std::string(pk::isa_name(info.param)); });

TEST(Kernels, DispatchedMatchesScalar) {
  std::mt19937_64 rng(3);
  const auto a = random_vector(rng, 64);
  const auto b = random_vector(rng, 64);
  EXPECT_NEAR(pk::dot(a, b), pk::scalar::dot(a, b), tol(a, b));
}
