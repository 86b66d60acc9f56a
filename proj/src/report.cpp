#include "poolrank/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "poolrank/error.hpp"

namespace poolrank {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed3(double v, bool force_sign) {
  char buf[40];
  std::snprintf(buf, sizeof buf, force_sign ? "%+.3f" : "%.3f", v);
  std::string s(buf);
  // ".077" / "-.009" style, as in the printed tables
  if (const auto p = s.find("0."); p != std::string::npos && (p == 0 || s[p - 1] == '+' || s[p - 1] == '-'))
    s.erase(p, 1);
  return s;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_tabs(line));
  return rows;
}

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::string model_label(const std::string& ranker_id) {
  const auto id = RankerId::parse(ranker_id);
  return id.is_model() ? id.model : ranker_id;
}

std::vector<std::string> delta_columns(const std::vector<int>& ks) {
  std::vector<std::string> cols{"model", "metric"};
  for (const int k : ks)
    for (const auto c : kComparisons)
      for (const char* part : {"mean", "ci_low", "ci_high"})
        cols.push_back("k" + std::to_string(k) + "_" + std::string(comparison_name(c)) + "_" + part);
  return cols;
}

}  // namespace

std::string format_delta_cell(const BootstrapDelta& d) {
  return fixed3(d.mean_delta, true) + " [" + fixed3(d.ci_low, false) + "," + fixed3(d.ci_high, false) + "]";
}

std::vector<AgreementTableRow> agreement_table(const std::vector<AgreementRow>& agreement,
                                               const std::vector<std::string>& model_rankers,
                                               int k) {
  struct Acc {
    double tau = 0.0;
    double jac = 0.0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const auto& r : agreement) {
    if (r.k != k) continue;
    for (const auto& key : {std::pair{r.ranker_a, r.ranker_b}, std::pair{r.ranker_b, r.ranker_a}}) {
      auto& a = acc[key];
      a.tau += r.kendall_tau;
      a.jac += r.topk_jaccard;
      ++a.n;
    }
  }
  auto get = [&](const std::string& m, const std::string& base) -> const Acc& {
    const auto it = acc.find({m, base});
    if (it == acc.end() || it->second.n == 0)
      throw MissingAgreement("no agreement rows for " + m + " vs " + base + " at k=" + std::to_string(k));
    return it->second;
  };

  std::vector<AgreementTableRow> rows;
  for (const auto& m : model_rankers) {
    const auto& bm = get(m, "bm25");
    const auto& mm = get(m, "mmr");
    const auto& rnd = get(m, "random");
    if (bm.n != mm.n || bm.n != rnd.n)
      throw MissingAgreement("agreement for " + m + " covers unequal cluster sets");
    const auto n = static_cast<double>(bm.n);
    rows.push_back(AgreementTableRow{model_label(m), m, bm.tau / n, mm.tau / n, bm.jac / n,
                                     mm.jac / n, rnd.jac / n, bm.n});
  }
  return rows;
}

void emit_agreement_table(const std::vector<AgreementTableRow>& rows, int k,
                          const std::filesystem::path& stem) {
  const auto ks = std::to_string(k);
  {
    auto out = open_out(std::filesystem::path(stem).concat(".tsv"));
    out << "model\tmodel_ranker\tclusters\ttau_bm25\ttau_mmr\ttop" << ks << "_jaccard_bm25\ttop" << ks
        << "_jaccard_mmr\ttop" << ks << "_jaccard_random\n";
    for (const auto& r : rows)
      out << r.model << '\t' << r.model_ranker << '\t' << r.clusters << '\t' << num(r.tau_bm25) << '\t'
          << num(r.tau_mmr) << '\t' << num(r.jaccard_bm25) << '\t' << num(r.jaccard_mmr) << '\t'
          << num(r.jaccard_random) << '\n';
  }
  auto md = open_out(std::filesystem::path(stem).concat(".md"));
  const auto clusters = rows.empty() ? std::size_t{0} : rows.front().clusters;
  md << "Ranking agreement averaged over " << clusters << " clusters.\n\n"
     << "| Model | Kendall tau BM25 | Kendall tau MMR | Top-" << ks << " Jaccard BM25 | Top-" << ks
     << " Jaccard MMR | Top-" << ks << " Jaccard Rand |\n"
     << "|---|---|---|---|---|---|\n";
  char buf[32];
  auto two = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  for (const auto& r : rows)
    md << "| " << r.model << " | " << two(r.tau_bm25) << " | " << two(r.tau_mmr) << " | "
       << two(r.jaccard_bm25) << " | " << two(r.jaccard_mmr) << " | " << two(r.jaccard_random) << " |\n";
}

void emit_delta_table(const std::vector<DeltaRow>& deltas, const std::vector<int>& ks,
                      const std::filesystem::path& stem) {
  std::map<std::tuple<std::string, std::string, int, Comparison>, const DeltaRow*> cell;
  std::vector<std::string> models;
  for (const auto& d : deltas) {
    cell[{d.model, d.metric, d.k, d.comparison}] = &d;
    if (std::find(models.begin(), models.end(), d.model) == models.end()) models.push_back(d.model);
  }
  auto get = [&](const std::string& model, std::string_view metric, int k, Comparison c) -> const DeltaRow& {
    const auto it = cell.find({model, std::string(metric), k, c});
    if (it == cell.end())
      throw MissingComparisons("no " + std::string(comparison_name(c)) + " delta for " + model + " / " +
                               std::string(metric) + " at k=" + std::to_string(k));
    return *it->second;
  };
  if (models.empty()) throw MissingComparisons("no comparisons to tabulate");

  // resolve every cell before writing anything
  for (const auto& m : models)
    for (const auto metric : kMetricNames)
      for (const int k : ks)
        for (const auto c : kComparisons) (void)get(m, metric, k, c);

  {
    auto out = open_out(std::filesystem::path(stem).concat(".tsv"));
    const auto cols = delta_columns(ks);
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "\t" : "") << cols[i];
    out << '\n';
    for (const auto& m : models)
      for (const auto metric : kMetricNames) {
        out << m << '\t' << metric;
        for (const int k : ks)
          for (const auto c : kComparisons) {
            const auto& d = get(m, metric, k, c).delta;
            out << '\t' << num(d.mean_delta) << '\t' << num(d.ci_low) << '\t' << num(d.ci_high);
          }
        out << '\n';
      }
  }

  auto md = open_out(std::filesystem::path(stem).concat(".md"));
  const auto& first = get(models.front(), kMetricNames.front(), ks.front(), kComparisons.front());
  char level[16];
  std::snprintf(level, sizeof level, "%g", first.delta.ci_level * 100.0);
  md << "Paired bootstrap differences (mean delta, " << level << "% percentile CI, "
     << first.delta.resamples << " resamples) over " << first.clusters
     << " clusters. Positive delta means the first method is higher; for redundancy, lower is better.\n\n"
     << "| Model | Metric |";
  for (const int k : ks)
    for (const auto c : kComparisons) md << " K=" << k << " " << comparison_name(c) << " |";
  md << "\n|---|---|";
  for (std::size_t i = 0; i < ks.size() * kComparisons.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& m : models)
    for (const auto metric : kMetricNames) {
      md << "| " << m << " | " << metric << " |";
      for (const int k : ks)
        for (const auto c : kComparisons) md << ' ' << format_delta_cell(get(m, metric, k, c).delta) << " |";
      md << '\n';
    }
}

void emit_curve_data(const std::vector<DeltaRow>& deltas, const std::vector<int>& ks,
                     const std::filesystem::path& path) {
  std::map<std::tuple<std::string, std::string, int>, const DeltaRow*> cell;
  std::vector<std::string> models;
  for (const auto& d : deltas) {
    if (d.comparison != Comparison::mmr_minus_llm) continue;
    cell[{d.model, d.metric, d.k}] = &d;
    if (std::find(models.begin(), models.end(), d.model) == models.end()) models.push_back(d.model);
  }
  if (models.empty()) throw MissingComparisons("no mmr-llm comparisons for curve data");

  json series = json::array();
  for (const auto metric : kCurveMetrics)
    for (const auto& m : models) {
      json points = json::array();
      for (const int k : ks) {
        const auto it = cell.find({m, std::string(metric), k});
        if (it == cell.end())
          throw MissingComparisons("no mmr-llm delta for " + m + " / " + std::string(metric) +
                                   " at k=" + std::to_string(k));
        const auto& d = it->second->delta;
        points.push_back({{"k", k}, {"delta", d.mean_delta}, {"ci_low", d.ci_low}, {"ci_high", d.ci_high}});
      }
      series.push_back({{"metric", metric}, {"model", m}, {"points", std::move(points)}});
    }
  const json doc{{"comparison", "mmr-llm"}, {"k_values", ks}, {"series", std::move(series)}};
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

void validate_agreement_table(const std::filesystem::path& tsv, std::size_t expected_models) {
  const auto rows = read_tsv(tsv);
  if (rows.empty()) throw SchemaError("agreement table is empty");
  const auto& header = rows.front();
  if (header.size() != 8 || header[0] != "model" || header[3] != "tau_bm25" || header[4] != "tau_mmr" ||
      header[5].find("_jaccard_bm25") == std::string::npos ||
      header[6].find("_jaccard_mmr") == std::string::npos ||
      header[7].find("_jaccard_random") == std::string::npos)
    throw SchemaError("agreement table header does not match model|tau x2|jaccard x3");
  if (rows.size() - 1 != expected_models)
    throw SchemaError("agreement table has " + std::to_string(rows.size() - 1) + " rows, expected " +
                      std::to_string(expected_models));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size()) throw SchemaError("agreement row " + std::to_string(i) + " has wrong arity");
    for (std::size_t c = 3; c < 8; ++c) {
      if (!parses_as_number(r[c])) throw SchemaError("non-numeric agreement cell in row " + std::to_string(i));
      const double v = std::strtod(r[c].c_str(), nullptr);
      const double lo = c < 5 ? -1.0 : 0.0;
      if (v < lo - 1e-12 || v > 1.0 + 1e-12)
        throw SchemaError("agreement cell out of range in row " + std::to_string(i));
    }
  }
}

void validate_delta_table(const std::filesystem::path& tsv, const std::vector<int>& ks,
                          std::size_t expected_models) {
  const auto rows = read_tsv(tsv);
  if (rows.empty()) throw SchemaError("delta table is empty");
  if (rows.front() != delta_columns(ks)) throw SchemaError("delta table header mismatch");
  if (rows.size() - 1 != expected_models * kMetricNames.size())
    throw SchemaError("delta table has " + std::to_string(rows.size() - 1) + " rows, expected " +
                      std::to_string(expected_models * kMetricNames.size()));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != rows.front().size()) throw SchemaError("delta row " + std::to_string(i) + " has wrong arity");
    if (r[1] != kMetricNames[(i - 1) % kMetricNames.size()])
      throw SchemaError("delta row " + std::to_string(i) + " metric out of order");
    for (std::size_t c = 2; c < r.size(); c += 3) {
      for (std::size_t o = 0; o < 3; ++o)
        if (!parses_as_number(r[c + o])) throw SchemaError("non-numeric delta cell in row " + std::to_string(i));
      if (std::strtod(r[c + 1].c_str(), nullptr) > std::strtod(r[c + 2].c_str(), nullptr))
        throw SchemaError("ci_low > ci_high in delta row " + std::to_string(i));
    }
  }
}

void validate_curve_data(const std::filesystem::path& path, const std::vector<int>& ks,
                         std::size_t expected_models) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("curve data is not JSON: ") + e.what());
  }
  if (doc.value("comparison", "") != "mmr-llm") throw SchemaError("curve data comparison must be mmr-llm");
  if (doc.at("k_values").get<std::vector<int>>() != ks) throw SchemaError("curve data k_values mismatch");
  const auto& series = doc.at("series");
  if (!series.is_array() || series.size() != expected_models * kCurveMetrics.size())
    throw SchemaError("curve data has the wrong number of series");
  for (const auto& s : series) {
    const auto metric = s.at("metric").get<std::string>();
    if (std::find(kCurveMetrics.begin(), kCurveMetrics.end(), metric) == kCurveMetrics.end())
      throw SchemaError("unexpected curve metric " + metric);
    const auto& pts = s.at("points");
    if (!pts.is_array() || pts.size() != ks.size()) throw SchemaError("series " + metric + " lacks points");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      const auto& p = pts[i];
      if (p.at("k").get<int>() != ks[i]) throw SchemaError("curve points out of k order");
      if (!p.at("delta").is_number() || p.at("ci_low").get<double>() > p.at("ci_high").get<double>())
        throw SchemaError("bad curve point");
    }
  }
}

}  // namespace poolrank
