// poolrank: command-line front end for the evidence-pool reranking harness.

#include <cstdio>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "poolrank/corpus.hpp"
#include "poolrank/embeddings.hpp"
#include "poolrank/error.hpp"
#include "poolrank/gateway_client.hpp"
#include "poolrank/kernels.hpp"
#include "poolrank/metrics.hpp"
#include "poolrank/rankers.hpp"
#include "poolrank/report.hpp"
#include "poolrank/runner.hpp"
#include "poolrank/stats.hpp"

#ifndef POOLRANK_DEFAULT_STOPWORDS
#define POOLRANK_DEFAULT_STOPWORDS "data/stopwords_en.txt"
#endif

namespace fs = std::filesystem;
using namespace poolrank;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split_list(s)) out.push_back(std::stoi(item));
  return out;
}

struct Globals {
  std::string config;
  std::string run_dir;
  bool offline = false;
  std::optional<std::uint64_t> seed_sample, seed_shuffle, seed_random, seed_bootstrap;
};

RunConfig load_config(const Globals& g) {
  auto c = RunConfig::load(g.config);
  if (g.offline) c.offline = true;
  if (g.seed_sample) c.pool.sample_seed = *g.seed_sample;
  if (g.seed_shuffle) c.pool.shuffle_seed = *g.seed_shuffle;
  if (g.seed_random) c.random_seed = *g.seed_random;
  if (g.seed_bootstrap) c.bootstrap_seed = *g.seed_bootstrap;
  return c;
}

int run_pipeline(const Globals& g, std::vector<Stage> stages, bool force) {
  const auto config = load_config(g);
  RunOptions opts;
  if (!g.run_dir.empty()) opts.run_dir = g.run_dir;
  opts.stages = std::move(stages);
  opts.force = force;
  const auto result = run(config, opts);
  for (const auto& s : result.stages)
    std::cerr << stage_name(s.stage) << (s.skipped ? ": up to date\n" : ": done\n");
  std::cout << result.run_dir.string() << '\n';
  return 0;
}

std::vector<std::string> model_rankers_in(const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids)
    if (RankerId::parse(id).is_model() && std::find(out.begin(), out.end(), id) == out.end())
      out.push_back(id);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fixed evidence-pool reranking diagnostics"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config, "Run config (JSON); stage commands then operate on the run directory")
      ->check(CLI::ExistingFile);
  app.add_option("--run-dir", g.run_dir, "Run directory (default: <output_root>/run-<config hash>)");
  app.add_flag("--offline", g.offline, "Forbid network access (embedding cache and fixtures only)");
  app.add_option("--seed-sample", g.seed_sample, "Override the source-sampling seed");
  app.add_option("--seed-shuffle", g.seed_shuffle, "Override the presentation-shuffle seed");
  app.add_option("--seed-random", g.seed_random, "Override the random-ranker seed");
  app.add_option("--seed-bootstrap", g.seed_bootstrap, "Override the bootstrap seed");

  // pools
  auto* pools_cmd = app.add_subcommand("pools", "Build standardized 8-document evidence pools");
  std::vector<std::string> pools_inputs;
  std::string pools_output;
  PoolParams pool_params;
  pools_cmd->add_option("--input", pools_inputs, "Dataset file(s), concatenated in order")->check(CLI::ExistingFile);
  pools_cmd->add_option("--output", pools_output, "Pool file to write");
  pools_cmd->add_option("--sample-seed", pool_params.sample_seed);
  pools_cmd->add_option("--shuffle-seed", pool_params.shuffle_seed);
  pools_cmd->add_option("--min-sources", pool_params.min_sources)->capture_default_str();
  pools_cmd->add_option("--snippet-chars", pool_params.snippet_chars)->capture_default_str();
  pools_cmd->add_option("--query-chars", pool_params.query_chars)->capture_default_str();

  // rank
  auto* rank_cmd = app.add_subcommand("rank", "Rank every pool under each ranker");
  std::string rank_pools_path, rank_output, rank_rankers = "bm25,mmr,random", rank_gateway, rank_fixtures;
  std::string rank_stopwords = POOLRANK_DEFAULT_STOPWORDS;
  double rank_lambda = 0.7;
  std::uint64_t rank_seed = 0;
  std::size_t rank_inflight = 4;
  rank_cmd->add_option("--pools", rank_pools_path)->check(CLI::ExistingFile);
  rank_cmd->add_option("--output", rank_output, "Rankings file to write");
  rank_cmd->add_option("--rankers", rank_rankers, "Comma list: bm25,mmr,random,llm:<m>,replay:<m>")->capture_default_str();
  rank_cmd->add_option("--lambda", rank_lambda, "MMR trade-off")->capture_default_str();
  rank_cmd->add_option("--seed", rank_seed, "Random-ranker seed");
  rank_cmd->add_option("--gateway-url", rank_gateway, "Gateway base URL (or $POOLRANK_GATEWAY_URL)");
  rank_cmd->add_option("--fixtures", rank_fixtures, "Recorded-response directory");
  rank_cmd->add_option("--max-inflight", rank_inflight)->capture_default_str();
  rank_cmd->add_option("--stopwords", rank_stopwords)->capture_default_str();

  // score
  auto* score_cmd = app.add_subcommand("score", "Selection metrics and ranking agreement");
  std::string score_pools_path, score_rankings, score_metrics_out, score_agreement_out, score_ks = "3,4,5,6";
  std::string score_cache = "embeddings.jsonl", score_model = EmbedOptions{}.model, score_gateway;
  std::string score_stopwords = POOLRANK_DEFAULT_STOPWORDS;
  std::size_t score_batch = 32;
  score_cmd->add_option("--pools", score_pools_path)->check(CLI::ExistingFile);
  score_cmd->add_option("--rankings", score_rankings)->check(CLI::ExistingFile);
  score_cmd->add_option("--k", score_ks, "Selection budgets")->capture_default_str();
  score_cmd->add_option("--metrics-out", score_metrics_out);
  score_cmd->add_option("--agreement-out", score_agreement_out);
  score_cmd->add_option("--embedding-cache", score_cache)->capture_default_str();
  score_cmd->add_option("--embedding-model", score_model)->capture_default_str();
  score_cmd->add_option("--batch-size", score_batch)->capture_default_str();
  score_cmd->add_option("--gateway-url", score_gateway);
  score_cmd->add_option("--stopwords", score_stopwords)->capture_default_str();

  // compare
  auto* compare_cmd = app.add_subcommand("compare", "Paired bootstrap deltas against the baselines");
  std::string cmp_metrics, cmp_output, cmp_ks = "3,4,5,6";
  BootstrapOptions boot;
  compare_cmd->add_option("--metrics", cmp_metrics)->check(CLI::ExistingFile);
  compare_cmd->add_option("--output", cmp_output);
  compare_cmd->add_option("--k", cmp_ks)->capture_default_str();
  compare_cmd->add_option("--resamples", boot.resamples)->capture_default_str();
  compare_cmd->add_option("--ci-level", boot.ci_level)->capture_default_str();
  compare_cmd->add_option("--seed", boot.seed);

  // report
  auto* report_cmd = app.add_subcommand("report", "Agreement table, delta table and curve data");
  std::string rep_agreement, rep_deltas, rep_out = "report", rep_table_k = "3,5", rep_curve_k = "3,4,5,6";
  int rep_agreement_k = 3;
  report_cmd->add_option("--agreement", rep_agreement)->check(CLI::ExistingFile);
  report_cmd->add_option("--deltas", rep_deltas)->check(CLI::ExistingFile);
  report_cmd->add_option("--out-dir", rep_out)->capture_default_str();
  report_cmd->add_option("--table-k", rep_table_k)->capture_default_str();
  report_cmd->add_option("--curve-k", rep_curve_k)->capture_default_str();
  report_cmd->add_option("--agreement-k", rep_agreement_k)->capture_default_str();

  // run
  auto* run_cmd = app.add_subcommand("run", "Run every stage from a config file (resumable)");
  bool run_force = false;
  run_cmd->add_flag("--force", run_force, "Recompute stages even when up to date");

  // health
  auto* health_cmd = app.add_subcommand("health", "Query the gateway's /health endpoint");
  std::string health_url;
  health_cmd->add_option("--gateway-url", health_url);

  auto* info_cmd = app.add_subcommand("info", "Print build and kernel information");

  CLI11_PARSE(app, argc, argv);

  try {
    const bool with_config = !g.config.empty();
    auto need = [](const std::string& v, const char* flag) {
      if (v.empty()) throw ConfigError(std::string(flag) + " is required without --config");
    };

    if (*run_cmd) {
      if (!with_config) throw ConfigError("run needs --config");
      return run_pipeline(g, {}, run_force);
    }
    if (*info_cmd) {
      std::cout << "poolrank " << kToolVersion << "\nkernel isa: "
                << kernels::isa_name(kernels::active_isa()) << '\n';
      return 0;
    }
    if (*health_cmd) {
      auto url = health_url.empty() ? GatewayClient::url_from_env().value_or("") : health_url;
      if (url.empty()) throw ConfigError("health needs --gateway-url or POOLRANK_GATEWAY_URL");
      GatewayClient client(url);
      const auto h = client.health();
      std::cout << "status: " << h.status << '\n';
      for (const auto& m : h.models) std::cout << "model: " << m << '\n';
      return h.status == "ok" ? 0 : 1;
    }

    if (*pools_cmd) {
      if (with_config) return run_pipeline(g, {Stage::pools}, true);
      if (pools_inputs.empty()) throw ConfigError("--input is required without --config");
      need(pools_output, "--output");
      std::vector<fs::path> inputs(pools_inputs.begin(), pools_inputs.end());
      const auto records = read_dataset(inputs);
      const auto built = build_pools(records, pool_params);
      save_pools(built.pools, pools_output);
      std::cerr << built.pools.size() << " pools written, " << built.skipped << " clusters skipped\n";
      return 0;
    }
    if (*rank_cmd) {
      if (with_config) return run_pipeline(g, {Stage::rank}, true);
      need(rank_pools_path, "--pools");
      need(rank_output, "--output");
      const auto pools = load_pools(rank_pools_path);
      const Tokenizer tokenizer(Stopwords::load(rank_stopwords));
      RankOptions opts;
      for (const auto& r : split_list(rank_rankers)) opts.rankers.push_back(RankerId::parse(r));
      opts.lambda = rank_lambda;
      opts.random_seed = rank_seed;
      if (!rank_fixtures.empty()) opts.fixtures_dir = rank_fixtures;
      opts.max_inflight = rank_inflight;
      std::unique_ptr<GatewayClient> client;
      const auto url = rank_gateway.empty() ? GatewayClient::url_from_env() : std::optional(rank_gateway);
      if (url && !g.offline) client = std::make_unique<GatewayClient>(*url);
      const auto result = rank_pools(pools, tokenizer, opts, client.get());
      save_rankings(result.rankings, rank_output);
      std::cerr << result.rankings.size() << " rankings written, " << result.fallbacks << " fallbacks\n";
      return 0;
    }
    if (*score_cmd) {
      if (with_config) return run_pipeline(g, {Stage::score}, true);
      need(score_pools_path, "--pools");
      need(score_rankings, "--rankings");
      need(score_metrics_out, "--metrics-out");
      need(score_agreement_out, "--agreement-out");
      const auto pools = load_pools(score_pools_path);
      const auto rankings = load_rankings(score_rankings);
      std::vector<std::string> order;
      for (const auto& r : rankings)
        if (std::find(order.begin(), order.end(), r.ranker().str()) == order.end())
          order.push_back(r.ranker().str());
      const Tokenizer tokenizer(Stopwords::load(score_stopwords));
      auto cache = EmbeddingCache::open(score_cache);
      std::unique_ptr<GatewayClient> client;
      std::unique_ptr<EmbeddingProvider> provider;
      const auto url = score_gateway.empty() ? GatewayClient::url_from_env() : std::optional(score_gateway);
      if (url && !g.offline) {
        client = std::make_unique<GatewayClient>(*url);
        provider = std::make_unique<GatewayEmbeddingProvider>(*client);
      }
      const EmbedOptions eo{score_model, provider == nullptr, score_batch};
      ScoreStageResult result;
      try {
        result = score_pools(pools, rankings, order, parse_ks(score_ks), tokenizer, provider.get(), cache, eo);
      } catch (...) {
        if (cache.dirty()) cache.save();
        throw;
      }
      if (cache.dirty()) cache.save();
      save_metrics(result.metrics, score_metrics_out);
      save_agreement(result.agreement, score_agreement_out);
      const auto& d = result.diagnostics;
      std::cerr << result.metrics.size() << " metric rows; zero-denominator events: query=" << d.empty_query
                << " summary=" << d.empty_summary << " jaccard=" << d.empty_jaccard << '\n';
      return 0;
    }
    if (*compare_cmd) {
      if (with_config) return run_pipeline(g, {Stage::compare}, true);
      need(cmp_metrics, "--metrics");
      need(cmp_output, "--output");
      const auto metrics = load_metrics(cmp_metrics);
      std::vector<std::string> ids;
      for (const auto& m : metrics) ids.push_back(m.ranker_id);
      const auto rows = build_comparisons(metrics, default_plan(model_rankers_in(ids), parse_ks(cmp_ks)), boot);
      save_deltas(rows, cmp_output);
      std::cerr << rows.size() << " comparison rows written\n";
      return 0;
    }
    if (*report_cmd) {
      if (with_config) return run_pipeline(g, {Stage::report}, true);
      need(rep_agreement, "--agreement");
      need(rep_deltas, "--deltas");
      const auto agreement = load_agreement(rep_agreement);
      const auto deltas = load_deltas(rep_deltas);
      std::vector<std::string> ids;
      for (const auto& d : deltas) ids.push_back(d.model_ranker);
      const auto models = model_rankers_in(ids);
      const fs::path out(rep_out);
      fs::create_directories(out);
      emit_agreement_table(agreement_table(agreement, models, rep_agreement_k), rep_agreement_k,
                           out / "agreement_table");
      emit_delta_table(deltas, parse_ks(rep_table_k), out / "delta_table");
      emit_curve_data(deltas, parse_ks(rep_curve_k), out / "curves.json");
      std::cerr << "report written to " << out.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
