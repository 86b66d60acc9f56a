#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "poolrank/error.hpp"
#include "poolrank/stats.hpp"
#include "support.hpp"

using namespace poolrank;
namespace pt = poolrank::testing;

namespace {

std::vector<PairedSample> normal_samples(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.3, 0.2);
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"c" + std::to_string(i), d(rng), d(rng)});
  return out;
}

MetricsRow row(const std::string& cluster, const std::string& ranker, int k, double v) {
  return MetricsRow{cluster, ranker, k, SelectionMetrics{v, v, v, v, v}};
}

}  // namespace

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> s{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(percentile_sorted(s, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile_sorted(s, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(percentile_sorted(s, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(percentile_sorted(s, 0.1), 1.4);  // h = 0.4
  EXPECT_DOUBLE_EQ(percentile_sorted(std::vector<double>{7}, 0.3), 7.0);
  EXPECT_THROW((void)percentile_sorted(std::vector<double>{}, 0.5), TooFewSamples);
}

TEST(Bootstrap, ConstantDeltasAreExactlyDegenerate) {
  for (std::size_t n : {2u, 3u, 345u, 1000u}) {
    std::vector<double> d(n, 0.1);
    for (int resamples : {1, 7, 1000, 10000}) {
      const auto b = bootstrap_mean(d, resamples, 0.95, 42);
      EXPECT_EQ(b.mean_delta, 0.1);
      EXPECT_EQ(b.ci_low, 0.1);
      EXPECT_EQ(b.ci_high, 0.1);
    }
  }
  std::vector<PairedSample> paired;
  for (int i = 0; i < 50; ++i) paired.push_back({"c", 0.1 + i * 0.01, i * 0.01});
  const auto b = paired_bootstrap(paired, 500, 0.95, 1);
  EXPECT_NEAR(b.mean_delta, 0.1, 1e-15);
  EXPECT_NEAR(b.ci_high - b.ci_low, 0.0, 1e-15);
}

TEST(Bootstrap, MeanIsSampleMean) {
  const auto s = normal_samples(3, 345);
  double sum = 0.0;
  for (const auto& p : s) sum += p.value_a - p.value_b;
  const auto b = paired_bootstrap(s, 2000, 0.95, 9);
  EXPECT_NEAR(b.mean_delta, sum / 345.0, 1e-12);
  EXPECT_LT(b.ci_low, b.mean_delta);
  EXPECT_GT(b.ci_high, b.mean_delta);
  // Roughly mean +/- 1.96 * sd(diff) / sqrt(n), sd(diff) = 0.2 * sqrt(2).
  EXPECT_NEAR(b.ci_high - b.ci_low, 2 * 1.96 * 0.2 * std::sqrt(2.0) / std::sqrt(345.0), 0.006);
}

TEST(Bootstrap, DeterministicToTheBit) {
  const auto s = normal_samples(5, 100);
  EXPECT_EQ(paired_bootstrap(s, 3000, 0.95, 77), paired_bootstrap(s, 3000, 0.95, 77));
  EXPECT_NE(paired_bootstrap(s, 3000, 0.95, 77).ci_low, paired_bootstrap(s, 3000, 0.95, 78).ci_low);
}

TEST(Bootstrap, MirroredComparisonIsAntisymmetric) {
  auto s = normal_samples(8, 200);
  const auto fwd = paired_bootstrap(s, 5000, 0.95, 31);
  for (auto& p : s) std::swap(p.value_a, p.value_b);
  const auto rev = paired_bootstrap(s, 5000, 0.95, 31);
  EXPECT_EQ(rev.mean_delta, -fwd.mean_delta);
  EXPECT_NEAR(rev.ci_low, -fwd.ci_high, 1e-12);
  EXPECT_NEAR(rev.ci_high, -fwd.ci_low, 1e-12);
}

TEST(Bootstrap, ArgumentChecks) {
  const std::vector<double> one{0.5};
  EXPECT_THROW((void)bootstrap_mean(one, 100, 0.95, 0), TooFewSamples);
  const std::vector<double> two{0.5, 0.6};
  EXPECT_THROW((void)bootstrap_mean(two, 0, 0.95, 0), ConfigError);
  EXPECT_THROW((void)bootstrap_mean(two, 10, 1.0, 0), ConfigError);
  const std::vector<double> nan{0.5, NAN};
  EXPECT_THROW((void)bootstrap_mean(nan, 10, 0.95, 0), ConfigError);
}

TEST(Plan, NestingOrderAndPairwiseSkip) {
  const auto plan = default_plan({"replay:a", "replay:b"}, {1, 3});
  // Per model: 3 singleton metrics x 3 comparisons x 2 k plus 2 pairwise x 3 x 1.
  EXPECT_EQ(plan.size(), 2u * (3 * 3 * 2 + 2 * 3 * 1));
  EXPECT_EQ(plan[0].model_ranker, "replay:a");
  EXPECT_EQ(plan[0].metric, "coverage");
  EXPECT_EQ(plan[0].k, 1);
  EXPECT_EQ(plan[1].k, 3);
  EXPECT_EQ(plan[2].comparison, Comparison::bm25_minus_llm);
  EXPECT_TRUE(default_plan({}, {3}).empty());
}

TEST(Comparisons, SignsSeedsAndMissing) {
  std::vector<MetricsRow> m;
  for (int c = 0; c < 10; ++c) {
    const auto id = "c" + std::to_string(c);
    m.push_back(row(id, "bm25", 3, 0.5));
    m.push_back(row(id, "mmr", 3, 0.7));
    m.push_back(row(id, "random", 3, 0.1));
    m.push_back(row(id, "replay:mock", 3, 0.7));
  }
  const auto plan = default_plan({"replay:mock"}, {3});
  const auto out = build_comparisons(m, plan, BootstrapOptions{1000, 0.95, 5});
  ASSERT_EQ(out.size(), plan.size());
  for (const auto& d : out) {
    EXPECT_EQ(d.model, "mock");
    EXPECT_EQ(d.clusters, 10u);
    EXPECT_EQ(d.delta.seed, row_seed(5, PlanRow{d.model_ranker, d.metric, d.comparison, d.k}));
    switch (d.comparison) {
      case Comparison::mmr_minus_llm: EXPECT_EQ(d.delta.mean_delta, 0.0); EXPECT_EQ(d.delta.ci_low, 0.0); break;
      case Comparison::bm25_minus_llm: EXPECT_NEAR(d.delta.mean_delta, -0.2, 1e-12); break;
      case Comparison::llm_minus_random: EXPECT_NEAR(d.delta.mean_delta, 0.6, 1e-12); break;
    }
  }
  EXPECT_TRUE(build_comparisons(m, {}, BootstrapOptions{}).empty());
  EXPECT_THROW((void)build_comparisons(m, default_plan({"replay:ghost"}, {3}), BootstrapOptions{}),
               MissingMetrics);
  EXPECT_THROW((void)build_comparisons(m, default_plan({"replay:mock"}, {5}), BootstrapOptions{}),
               MissingMetrics);
}

TEST(Comparisons, RowSeedIndependentOfPlanOrder) {
  std::vector<MetricsRow> m;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int c = 0; c < 20; ++c)
    for (const char* r : {"bm25", "mmr", "random", "replay:x"}) m.push_back(row("c" + std::to_string(c), r, 3, u(rng)));
  auto plan = default_plan({"replay:x"}, {3});
  const auto fwd = build_comparisons(m, plan, BootstrapOptions{500, 0.95, 1});
  std::reverse(plan.begin(), plan.end());
  const auto rev = build_comparisons(m, plan, BootstrapOptions{500, 0.95, 1});
  for (std::size_t i = 0; i < fwd.size(); ++i) EXPECT_EQ(fwd[i].delta, rev[fwd.size() - 1 - i].delta);
}

TEST(DeltasFile, RoundTripIsExact) {
  std::vector<MetricsRow> m;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int c = 0; c < 12; ++c)
    for (const char* r : {"bm25", "mmr", "random", "replay:x"}) m.push_back(row("c" + std::to_string(c), r, 3, u(rng)));
  const auto rows = build_comparisons(m, default_plan({"replay:x"}, {3}), BootstrapOptions{200, 0.95, 2});
  pt::TempDir dir;
  save_deltas(rows, dir / "d.jsonl");
  const auto back = load_deltas(dir / "d.jsonl");
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].delta, rows[i].delta);
    EXPECT_EQ(back[i].metric, rows[i].metric);
  }
}
