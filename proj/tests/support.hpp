#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "poolrank/corpus.hpp"
#include "poolrank/error.hpp"
#include "poolrank/rankers.hpp"
#include "poolrank/textproc.hpp"

namespace poolrank::testing {

inline std::filesystem::path source_dir() { return POOLRANK_SOURCE_DIR; }
inline std::filesystem::path stopwords_path() { return source_dir() / "data" / "stopwords_en.txt"; }
inline std::filesystem::path fixture_config() { return source_dir() / "configs" / "fixtures.json"; }

inline const Tokenizer& tokenizer() {
  static const Tokenizer t(Stopwords::load(stopwords_path()));
  return t;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("poolrank-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

inline EvidencePool make_pool(const std::string& id, std::vector<std::string> docs,
                              PresentationOrder order = {0, 1, 2, 3, 4, 5, 6, 7},
                              std::string query = "fire in the canyon",
                              std::string summary = "A fire burned. Crews responded.") {
  EvidencePool p;
  p.cluster_id = id;
  p.query = std::move(query);
  p.summary = std::move(summary);
  for (std::size_t i = 0; i < docs.size(); ++i) p.documents.push_back({static_cast<int>(i), docs[i]});
  p.presentation_order = order;
  return p;
}

inline RankedIndices random_perm(std::mt19937_64& rng) {
  RankedIndices p{0, 1, 2, 3, 4, 5, 6, 7};
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

/// Random token set over a small vocabulary so overlaps are common.
inline TokenSet random_token_set(std::mt19937_64& rng, int vocab = 20, int max_size = 8) {
  TokenSet s;
  std::uniform_int_distribution<int> size(0, max_size);
  std::uniform_int_distribution<int> word(0, vocab - 1);
  const int n = size(rng);
  for (int i = 0; i < n; ++i) s.insert("w" + std::to_string(word(rng)));
  return s;
}

/// Whether the error wrapped by a StageError is of type E.
template <class E>
bool cause_is(const StageError& e) {
  if (!e.cause()) return false;
  try {
    std::rethrow_exception(e.cause());
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace poolrank::testing
