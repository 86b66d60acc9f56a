#include "poolrank/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"
#include "poolrank/hashing.hpp"
#include "poolrank/kernels.hpp"

namespace poolrank {

using nlohmann::json;

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw TooFewSamples("percentile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BootstrapDelta bootstrap_mean(std::span<const double> deltas, int resamples, double ci_level,
                              std::uint64_t seed) {
  if (deltas.size() < 2) throw TooFewSamples("paired bootstrap needs at least two clusters");
  if (resamples < 1) throw ConfigError("resamples must be at least 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
  const auto n = deltas.size();
  for (const double d : deltas)
    if (!std::isfinite(d)) throw ConfigError("non-finite paired difference");

  // Anchored mean, then resample the centred deltas: constant input stays
  // exactly constant through every resample.
  const double anchor = deltas.front();
  double spread = 0.0;
  for (const double d : deltas) spread += d - anchor;
  const double mean = anchor + spread / static_cast<double>(n);
  std::vector<double> centred(n);
  for (std::size_t i = 0; i < n; ++i) centred[i] = deltas[i] - mean;

  CounterRng rng(seed);
  std::vector<std::uint32_t> idx(n);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  const auto bound = static_cast<std::uint32_t>(n);
  for (auto& m : means) {
    for (auto& i : idx) i = rng.below(bound);
    m = mean + kernels::gather_sum(centred, idx) / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());

  const double alpha = (1.0 - ci_level) / 2.0;
  BootstrapDelta out;
  out.mean_delta = mean;
  out.ci_low = percentile_sorted(means, alpha);
  out.ci_high = percentile_sorted(means, 1.0 - alpha);
  out.resamples = resamples;
  out.ci_level = ci_level;
  out.seed = seed;
  return out;
}

BootstrapDelta paired_bootstrap(std::span<const PairedSample> samples, int resamples,
                                double ci_level, std::uint64_t seed) {
  std::vector<double> deltas;
  deltas.reserve(samples.size());
  for (const auto& s : samples) {
    if (!std::isfinite(s.value_a) || !std::isfinite(s.value_b))
      throw ConfigError("non-finite metric value for cluster " + s.cluster_id);
    deltas.push_back(s.value_a - s.value_b);
  }
  return bootstrap_mean(deltas, resamples, ci_level, seed);
}

std::string_view comparison_name(Comparison c) noexcept {
  switch (c) {
    case Comparison::mmr_minus_llm: return "mmr-llm";
    case Comparison::bm25_minus_llm: return "bm25-llm";
    case Comparison::llm_minus_random: return "llm-random";
  }
  return "";
}

Comparison parse_comparison(std::string_view name) {
  for (const auto c : kComparisons)
    if (comparison_name(c) == name) return c;
  throw ConfigError("unknown comparison '" + std::string(name) + "'");
}

std::vector<PlanRow> default_plan(const std::vector<std::string>& model_rankers,
                                  const std::vector<int>& ks) {
  std::vector<PlanRow> plan;
  for (const auto& m : model_rankers)
    for (const auto metric : kMetricNames)
      for (const auto c : kComparisons)
        for (const int k : ks) {
          const bool pairwise = metric == "redundancy" || metric == "sem_redundancy";
          if (pairwise && k < 2) continue;
          plan.push_back(PlanRow{m, std::string(metric), c, k});
        }
  return plan;
}

std::uint64_t row_seed(std::uint64_t seed, const PlanRow& row) {
  return hash64(seed, row.model_ranker + "|" + row.metric + "|" +
                          std::string(comparison_name(row.comparison)) + "|" + std::to_string(row.k));
}

namespace {

std::string model_of(const std::string& ranker_id) {
  const auto id = RankerId::parse(ranker_id);
  return id.is_model() ? id.model : ranker_id;
}

}  // namespace

std::vector<DeltaRow> build_comparisons(const std::vector<MetricsRow>& metrics,
                                        const std::vector<PlanRow>& plan,
                                        const BootstrapOptions& options) {
  std::map<std::pair<std::string, int>, std::map<std::string, const SelectionMetrics*>> index;
  for (const auto& row : metrics) index[{row.ranker_id, row.k}][row.cluster_id] = &row.metrics;

  auto lookup = [&](const std::string& ranker, int k) -> const auto& {
    const auto it = index.find({ranker, k});
    if (it == index.end())
      throw MissingMetrics("no metrics for ranker " + ranker + " at k=" + std::to_string(k));
    return it->second;
  };

  std::vector<DeltaRow> out;
  out.reserve(plan.size());
  for (const auto& row : plan) {
    std::string first;
    std::string second;
    switch (row.comparison) {
      case Comparison::mmr_minus_llm: first = "mmr", second = row.model_ranker; break;
      case Comparison::bm25_minus_llm: first = "bm25", second = row.model_ranker; break;
      case Comparison::llm_minus_random: first = row.model_ranker, second = "random"; break;
    }
    const auto& a = lookup(first, row.k);
    const auto& b = lookup(second, row.k);
    if (a.size() != b.size())
      throw MissingMetrics(first + " and " + second + " cover different clusters at k=" +
                           std::to_string(row.k));
    std::vector<PairedSample> samples;
    samples.reserve(a.size());
    for (const auto& [cluster, ma] : a) {
      const auto it = b.find(cluster);
      if (it == b.end())
        throw MissingMetrics("no metrics for ranker " + second + " on cluster " + cluster);
      const auto va = metric_value(*ma, row.metric);
      const auto vb = metric_value(*it->second, row.metric);
      if (!va || !vb)
        throw MissingMetrics("metric " + row.metric + " undefined at k=" + std::to_string(row.k));
      samples.push_back(PairedSample{cluster, *va, *vb});
    }
    DeltaRow d;
    d.model = model_of(row.model_ranker);
    d.model_ranker = row.model_ranker;
    d.metric = row.metric;
    d.comparison = row.comparison;
    d.k = row.k;
    d.clusters = samples.size();
    d.delta = paired_bootstrap(samples, options.resamples, options.ci_level,
                               row_seed(options.seed, row));
    out.push_back(std::move(d));
  }
  return out;
}

json delta_row_to_json(const DeltaRow& row) {
  return json{{"model", row.model},
              {"model_ranker", row.model_ranker},
              {"metric", row.metric},
              {"comparison", comparison_name(row.comparison)},
              {"k", row.k},
              {"clusters", row.clusters},
              {"mean_delta", row.delta.mean_delta},
              {"ci_low", row.delta.ci_low},
              {"ci_high", row.delta.ci_high},
              {"resamples", row.delta.resamples},
              {"ci_level", row.delta.ci_level},
              {"seed", row.delta.seed}};
}

DeltaRow delta_row_from_json(const json& j) {
  try {
    DeltaRow row;
    row.model = j.at("model").get<std::string>();
    row.model_ranker = j.at("model_ranker").get<std::string>();
    row.metric = j.at("metric").get<std::string>();
    row.comparison = parse_comparison(j.at("comparison").get<std::string>());
    row.k = j.at("k").get<int>();
    row.clusters = j.at("clusters").get<std::size_t>();
    row.delta.mean_delta = j.at("mean_delta").get<double>();
    row.delta.ci_low = j.at("ci_low").get<double>();
    row.delta.ci_high = j.at("ci_high").get<double>();
    row.delta.resamples = j.at("resamples").get<int>();
    row.delta.ci_level = j.at("ci_level").get<double>();
    row.delta.seed = j.at("seed").get<std::uint64_t>();
    return row;
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  }
}

void save_deltas(const std::vector<DeltaRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : rows) out << delta_row_to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<DeltaRow> load_deltas(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<DeltaRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(delta_row_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw SchemaError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace poolrank
