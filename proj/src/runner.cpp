#include "poolrank/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

#include "poolrank/embeddings.hpp"
#include "poolrank/error.hpp"
#include "poolrank/gateway_client.hpp"
#include "poolrank/hashing.hpp"
#include "poolrank/kernels.hpp"
#include "poolrank/metrics.hpp"
#include "poolrank/report.hpp"
#include "poolrank/stats.hpp"

namespace poolrank {

using nlohmann::json;
namespace fs = std::filesystem;

// --------------------------------------------------------------- RunConfig

namespace {

const std::set<std::string> kTopKeys = {
    "dataset",     "stopwords", "pools",     "seeds",    "rankers", "mmr_lambda",
    "gateway_url", "fixtures",  "max_inflight", "embedding", "k_values", "table_k",
    "agreement_k", "resamples", "ci_level",  "offline",  "output_root"};

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string rel(const fs::path& base, const fs::path& p) {
  if (base.empty()) return p.generic_string();
  const auto r = p.lexically_relative(base);
  return r.empty() ? p.generic_string() : r.generic_string();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j, kTopKeys, "");
  RunConfig c;
  try {
    const auto& ds = j.at("dataset");
    if (ds.is_string()) {
      c.dataset.push_back(resolve(base_dir, ds.get<std::string>()));
    } else {
      for (const auto& d : ds) c.dataset.push_back(resolve(base_dir, d.get<std::string>()));
    }
    c.stopwords = resolve(base_dir, j.at("stopwords").get<std::string>());
    if (j.contains("pools")) {
      const auto& p = j["pools"];
      reject_unknown(p, {"min_sources", "snippet_chars", "query_chars"}, "pools.");
      c.pool.min_sources = p.value("min_sources", c.pool.min_sources);
      c.pool.snippet_chars = p.value("snippet_chars", c.pool.snippet_chars);
      c.pool.query_chars = p.value("query_chars", c.pool.query_chars);
    }
    if (j.contains("seeds")) {
      const auto& s = j["seeds"];
      reject_unknown(s, {"sample", "shuffle", "random_ranker", "bootstrap"}, "seeds.");
      c.pool.sample_seed = s.value("sample", c.pool.sample_seed);
      c.pool.shuffle_seed = s.value("shuffle", c.pool.shuffle_seed);
      c.random_seed = s.value("random_ranker", c.random_seed);
      c.bootstrap_seed = s.value("bootstrap", c.bootstrap_seed);
    }
    c.rankers = j.at("rankers").get<std::vector<std::string>>();
    c.mmr_lambda = j.value("mmr_lambda", c.mmr_lambda);
    if (j.contains("gateway_url") && !j["gateway_url"].is_null())
      c.gateway_url = j["gateway_url"].get<std::string>();
    if (j.contains("fixtures") && !j["fixtures"].is_null())
      c.fixtures = resolve(base_dir, j["fixtures"].get<std::string>());
    c.max_inflight = j.value("max_inflight", c.max_inflight);
    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      reject_unknown(e, {"model", "cache", "batch_size"}, "embedding.");
      c.embedding_model = e.value("model", c.embedding_model);
      if (e.contains("cache")) c.embedding_cache = resolve(base_dir, e["cache"].get<std::string>());
      c.embedding_batch = e.value("batch_size", c.embedding_batch);
    }
    c.k_values = j.value("k_values", c.k_values);
    c.table_k = j.value("table_k", c.table_k);
    c.agreement_k = j.value("agreement_k", c.agreement_k);
    c.resamples = j.value("resamples", c.resamples);
    c.ci_level = j.value("ci_level", c.ci_level);
    c.offline = j.value("offline", c.offline);
    c.output_root = resolve(base_dir, j.value("output_root", std::string("runs")));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.embedding_cache.empty()) c.embedding_cache = resolve(base_dir, "embeddings.jsonl");
  c.base_dir_ = base_dir;
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::snapshot() const {
  json ds = json::array();
  for (const auto& d : dataset) ds.push_back(rel(base_dir_, d));
  json j{{"dataset", ds},
         {"stopwords", rel(base_dir_, stopwords)},
         {"pools",
          {{"min_sources", pool.min_sources},
           {"snippet_chars", pool.snippet_chars},
           {"query_chars", pool.query_chars}}},
         {"seeds",
          {{"sample", pool.sample_seed},
           {"shuffle", pool.shuffle_seed},
           {"random_ranker", random_seed},
           {"bootstrap", bootstrap_seed}}},
         {"rankers", rankers},
         {"mmr_lambda", mmr_lambda},
         {"fixtures", fixtures ? json(rel(base_dir_, *fixtures)) : json(nullptr)},
         {"embedding",
          {{"model", embedding_model},
           {"cache", rel(base_dir_, embedding_cache)},
           {"batch_size", embedding_batch}}},
         {"k_values", k_values},
         {"table_k", table_k},
         {"agreement_k", agreement_k},
         {"resamples", resamples},
         {"ci_level", ci_level}};
  return j;
}

std::string RunConfig::config_hash() const { return sha256_hex(snapshot().dump()); }

std::vector<std::string> RunConfig::model_rankers() const {
  std::vector<std::string> out;
  for (const auto& r : rankers)
    if (RankerId::parse(r).is_model()) out.push_back(r);
  return out;
}

void RunConfig::validate() const {
  if (dataset.empty()) throw ConfigError("no dataset files configured");
  for (const auto& d : dataset)
    if (!fs::exists(d)) throw ConfigError("dataset file not found: " + d.string());
  if (!fs::exists(stopwords)) throw ConfigError("stopword list not found: " + stopwords.string());
  if (pool.min_sources < static_cast<std::size_t>(kPoolSize))
    throw ConfigError("min_sources must be at least 8");
  if (pool.snippet_chars < 1 || pool.query_chars < 1) throw ConfigError("character limits must be positive");
  if (!(mmr_lambda >= 0.0 && mmr_lambda <= 1.0)) throw ConfigError("mmr_lambda must lie in [0, 1]");
  if (rankers.empty()) throw ConfigError("no rankers configured");
  std::set<std::string> seen_ids;
  std::set<std::string> seen_models;
  bool needs_fixtures = false;
  for (const auto& r : rankers) {
    const auto id = RankerId::parse(r);
    if (!seen_ids.insert(id.str()).second) throw ConfigError("ranker listed twice: " + r);
    if (id.is_model()) {
      if (!seen_models.insert(id.model).second)
        throw ConfigError("model '" + id.model + "' appears under two rankers");
      needs_fixtures = needs_fixtures || id.kind == RankerId::Kind::replay;
    }
  }
  if (!model_rankers().empty())
    for (const char* base : {"bm25", "mmr", "random"})
      if (!seen_ids.contains(base))
        throw ConfigError(std::string("model comparisons require the '") + base + "' ranker");
  if (needs_fixtures && (!fixtures || !fs::is_directory(*fixtures)))
    throw ConfigError("replay rankers need an existing fixtures directory");
  auto check_ks = [](const std::vector<int>& ks, const char* name) {
    if (ks.empty()) throw ConfigError(std::string(name) + " is empty");
    for (const int k : ks)
      if (k < 1 || k > kPoolSize) throw ConfigError(std::string(name) + " values must lie in 1..8");
  };
  check_ks(k_values, "k_values");
  check_ks(table_k, "table_k");
  for (const int k : table_k)
    if (std::find(k_values.begin(), k_values.end(), k) == k_values.end())
      throw ConfigError("table_k value " + std::to_string(k) + " is not in k_values");
  if (std::find(k_values.begin(), k_values.end(), agreement_k) == k_values.end())
    throw ConfigError("agreement_k must be one of k_values");
  if (resamples < 1) throw ConfigError("resamples must be at least 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
  if (max_inflight < 1) throw ConfigError("max_inflight must be at least 1");
}

// ------------------------------------------------------------------ stages

std::string_view stage_name(Stage s) noexcept {
  switch (s) {
    case Stage::pools: return "pools";
    case Stage::rank: return "rank";
    case Stage::score: return "score";
    case Stage::compare: return "compare";
    case Stage::report: return "report";
  }
  return "";
}

fs::path RunLayout::stage_record(Stage s) const {
  return root / "stages" / (std::string(stage_name(s)) + ".json");
}

fs::path default_run_dir(const RunConfig& config) {
  return config.output_root / ("run-" + config.config_hash().substr(0, 12));
}

namespace {

std::string hash_or_absent(const fs::path& p) {
  return fs::is_regular_file(p) ? sha256_file(p) : std::string("absent");
}

void require_file(Stage stage, const fs::path& p) {
  if (!fs::is_regular_file(p))
    throw StageError(std::string(stage_name(stage)), {},
                     "missing input " + p.filename().string() + "; run the earlier stage first");
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return json::parse(in);
}

Tokenizer make_tokenizer(const RunConfig& c) { return Tokenizer(Stopwords::load(c.stopwords)); }

std::vector<RankerId> parse_rankers(const RunConfig& c) {
  std::vector<RankerId> out;
  for (const auto& r : c.rankers) out.push_back(RankerId::parse(r));
  return out;
}

std::optional<std::string> effective_gateway(const RunConfig& c) {
  if (c.offline) return std::nullopt;
  if (c.gateway_url) return c.gateway_url;
  return GatewayClient::url_from_env();
}

/// Inputs and parameters that determine one stage's outputs.
struct StagePlan {
  json inputs = json::object();
  json params = json::object();
  std::vector<fs::path> outputs;
};

StagePlan plan_stage(Stage s, const RunConfig& c, const RunLayout& L) {
  StagePlan p;
  switch (s) {
    case Stage::pools:
      for (std::size_t i = 0; i < c.dataset.size(); ++i)
        p.inputs["dataset." + std::to_string(i)] = sha256_file(c.dataset[i]);
      p.params = c.snapshot()["pools"];
      p.params["sample_seed"] = c.pool.sample_seed;
      p.params["shuffle_seed"] = c.pool.shuffle_seed;
      p.outputs = {L.pools()};
      break;
    case Stage::rank: {
      require_file(s, L.pools());
      p.inputs["pools"] = sha256_file(L.pools());
      p.inputs["stopwords"] = sha256_file(c.stopwords);
      if (c.fixtures) {
        const auto pools = load_pools(L.pools());
        for (const auto& id : parse_rankers(c)) {
          if (!id.is_model()) continue;
          std::string acc;
          const FixtureStore store(*c.fixtures);
          for (const auto& pool : pools) acc += hash_or_absent(store.path_for(id.model, pool.cluster_id));
          p.inputs["fixtures." + id.model] = sha256_hex(acc);
        }
      }
      p.params = {{"rankers", c.rankers}, {"mmr_lambda", c.mmr_lambda}, {"random_seed", c.random_seed}};
      p.outputs = {L.rankings()};
      break;
    }
    case Stage::score:
      require_file(s, L.pools());
      require_file(s, L.rankings());
      p.inputs["pools"] = sha256_file(L.pools());
      p.inputs["rankings"] = sha256_file(L.rankings());
      p.inputs["stopwords"] = sha256_file(c.stopwords);
      p.inputs["embedding_cache"] = hash_or_absent(c.embedding_cache);
      p.params = {{"rankers", c.rankers}, {"k_values", c.k_values}, {"embedding_model", c.embedding_model}};
      p.outputs = {L.metrics(), L.agreement()};
      break;
    case Stage::compare:
      require_file(s, L.metrics());
      p.inputs["metrics"] = sha256_file(L.metrics());
      p.params = {{"models", c.model_rankers()},
                  {"k_values", c.k_values},
                  {"resamples", c.resamples},
                  {"ci_level", c.ci_level},
                  {"bootstrap_seed", c.bootstrap_seed},
                  {"ci_method", "percentile"}};
      p.outputs = {L.deltas()};
      break;
    case Stage::report:
      require_file(s, L.agreement());
      require_file(s, L.deltas());
      p.inputs["agreement"] = sha256_file(L.agreement());
      p.inputs["deltas"] = sha256_file(L.deltas());
      for (const Stage earlier : {Stage::pools, Stage::rank, Stage::score}) {
        require_file(s, L.stage_record(earlier));
        p.inputs["stage." + std::string(stage_name(earlier))] = sha256_file(L.stage_record(earlier));
      }
      p.params = {{"models", c.model_rankers()},
                  {"k_values", c.k_values},
                  {"table_k", c.table_k},
                  {"agreement_k", c.agreement_k}};
      p.outputs = {L.report_dir() / "agreement_table.tsv", L.report_dir() / "agreement_table.md",
                   L.report_dir() / "delta_table.tsv",     L.report_dir() / "delta_table.md",
                   L.report_dir() / "curves.json",         L.report_dir() / "diagnostics.json"};
      break;
  }
  return p;
}

bool stage_up_to_date(Stage s, const StagePlan& plan, const RunLayout& L) {
  const auto record_path = L.stage_record(s);
  if (!fs::is_regular_file(record_path)) return false;
  json rec;
  try {
    rec = read_json(record_path);
  } catch (const std::exception&) {
    return false;
  }
  if (rec.value("inputs", json()) != plan.inputs || rec.value("params", json()) != plan.params) return false;
  const auto outputs = rec.value("outputs", json::object());
  if (outputs.size() != plan.outputs.size()) return false;
  for (const auto& out : plan.outputs) {
    const auto key = rel(L.root, out);
    if (!outputs.contains(key) || !fs::is_regular_file(out) || sha256_file(out) != outputs[key]) return false;
  }
  return true;
}

/// Runs one stage and returns its stats block.
json execute_stage(Stage s, const RunConfig& c, const RunLayout& L) {
  switch (s) {
    case Stage::pools: {
      const auto records = read_dataset(c.dataset);
      auto built = build_pools(records, c.pool);
      save_pools(built.pools, L.pools());
      return {{"clusters_read", records.size()}, {"pools", built.pools.size()}, {"skipped_clusters", built.skipped}};
    }
    case Stage::rank: {
      const auto pools = load_pools(L.pools());
      const auto tokenizer = make_tokenizer(c);
      RankOptions opts;
      opts.rankers = parse_rankers(c);
      opts.lambda = c.mmr_lambda;
      opts.random_seed = c.random_seed;
      opts.fixtures_dir = c.fixtures;
      opts.max_inflight = c.max_inflight;
      std::unique_ptr<GatewayClient> client;
      const bool live = std::any_of(opts.rankers.begin(), opts.rankers.end(),
                                    [](const RankerId& r) { return r.kind == RankerId::Kind::llm; });
      if (live) {
        if (c.offline && !c.fixtures)
          throw StageError("rank", {}, "llm rankers in offline mode need recorded fixtures");
        if (const auto url = effective_gateway(c)) client = std::make_unique<GatewayClient>(*url);
      }
      const auto result = rank_pools(pools, tokenizer, opts, client.get());
      save_rankings(result.rankings, L.rankings());
      std::size_t model_rankings = 0;
      for (const auto& r : result.rankings) model_rankings += r.ranker().is_model() ? 1 : 0;
      return {{"rankings", result.rankings.size()},
              {"model_rankings", model_rankings},
              {"fallbacks", result.fallbacks},
              {"fallback_rate", model_rankings ? static_cast<double>(result.fallbacks) /
                                                     static_cast<double>(model_rankings)
                                               : 0.0}};
    }
    case Stage::score: {
      const auto pools = load_pools(L.pools());
      const auto rankings = load_rankings(L.rankings());
      const auto tokenizer = make_tokenizer(c);
      auto cache = EmbeddingCache::open(c.embedding_cache);
      std::unique_ptr<GatewayClient> client;
      std::unique_ptr<EmbeddingProvider> provider;
      if (const auto url = effective_gateway(c)) {
        client = std::make_unique<GatewayClient>(*url);
        provider = std::make_unique<GatewayEmbeddingProvider>(*client);
      }
      EmbedOptions eo{c.embedding_model, provider == nullptr, c.embedding_batch};
      ScoreStageResult result;
      try {
        result = score_pools(pools, rankings, c.rankers, c.k_values, tokenizer, provider.get(), cache, eo);
      } catch (...) {
        if (cache.dirty()) cache.save();  // keep what was fetched
        throw;
      }
      if (cache.dirty()) cache.save();
      save_metrics(result.metrics, L.metrics());
      save_agreement(result.agreement, L.agreement());
      const auto& d = result.diagnostics;
      return {{"metric_rows", result.metrics.size()},
              {"agreement_rows", result.agreement.size()},
              {"zero_denominator",
               {{"empty_query", d.empty_query}, {"empty_summary", d.empty_summary}, {"empty_jaccard", d.empty_jaccard}}}};
    }
    case Stage::compare: {
      const auto metrics = load_metrics(L.metrics());
      const auto plan = default_plan(c.model_rankers(), c.k_values);
      const auto rows = build_comparisons(metrics, plan, {c.resamples, c.ci_level, c.bootstrap_seed});
      save_deltas(rows, L.deltas());
      return {{"rows", rows.size()}};
    }
    case Stage::report: {
      const auto agreement = load_agreement(L.agreement());
      const auto deltas = load_deltas(L.deltas());
      const auto models = c.model_rankers();
      const auto dir = L.report_dir();
      fs::create_directories(dir);
      emit_agreement_table(agreement_table(agreement, models, c.agreement_k), c.agreement_k,
                           dir / "agreement_table");
      emit_delta_table(deltas, c.table_k, dir / "delta_table");
      emit_curve_data(deltas, c.k_values, dir / "curves.json");
      json diag{{"ci_method", "percentile"},
                {"ci_level", c.ci_level},
                {"resamples", c.resamples},
                {"mmr_relevance_normalization", "min-max"}};
      for (const Stage earlier : {Stage::pools, Stage::rank, Stage::score})
        diag[std::string(stage_name(earlier))] = read_json(L.stage_record(earlier)).value("stats", json::object());
      write_json(dir / "diagnostics.json", diag);
      return {{"models", models.size()}};
    }
  }
  return {};
}

class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f == nullptr)
      throw Error("run directory is locked by another process (remove " + path_.string() +
                  " if that process is gone)");
    std::fclose(f);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunResult run(const RunConfig& config, const RunOptions& options) {
  config.validate();
  const auto started = utc_now();
  RunLayout L{options.run_dir ? *options.run_dir : default_run_dir(config)};
  fs::create_directories(L.root / "stages");
  const RunLock lock(L.lock());

  RunResult result;
  result.run_dir = L.root;
  for (const Stage s : kStages) {
    if (!options.stages.empty() &&
        std::find(options.stages.begin(), options.stages.end(), s) == options.stages.end())
      continue;
    const auto name = std::string(stage_name(s));
    try {
      const auto plan = plan_stage(s, config, L);
      if (!options.force && stage_up_to_date(s, plan, L)) {
        result.stages.push_back({s, true});
        continue;
      }
      fs::remove(L.stage_record(s));
      auto stats = execute_stage(s, config, L);
      json outputs = json::object();
      for (const auto& out : plan.outputs) outputs[rel(L.root, out)] = sha256_file(out);
      write_json(L.stage_record(s), {{"stage", name},
                                     {"inputs", plan.inputs},
                                     {"params", plan.params},
                                     {"outputs", outputs},
                                     {"stats", stats}});
      result.stages.push_back({s, false});
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, {}, e.what(), std::current_exception());
    }
  }

  // Manifest: every file in the run directory, hashed.
  json files = json::object();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(L.root))
    if (entry.is_regular_file() && entry.path() != L.manifest() && entry.path() != L.lock())
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) files[rel(L.root, p)] = sha256_file(p);

  json diagnostics = json::object();
  for (const Stage s : {Stage::pools, Stage::rank, Stage::score})
    if (fs::is_regular_file(L.stage_record(s)))
      diagnostics[std::string(stage_name(s))] = read_json(L.stage_record(s)).value("stats", json::object());

  json stages = json::array();
  for (const auto& o : result.stages) stages.push_back({{"stage", stage_name(o.stage)}, {"skipped", o.skipped}});

  write_json(L.manifest(), {{"tool_version", kToolVersion},
                            {"config", config.snapshot()},
                            {"config_hash", config.config_hash()},
                            {"kernel_isa", kernels::isa_name(kernels::active_isa())},
                            {"mmr_relevance_normalization", "min-max"},
                            {"ci_method", "percentile"},
                            {"stages", stages},
                            {"files", files},
                            {"diagnostics", diagnostics},
                            {"timestamps", {{"started", started}, {"finished", utc_now()}}}});
  return result;
}

}  // namespace poolrank
