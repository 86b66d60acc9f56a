#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace poolrank {

/// Set of content tokens: lowercase maximal [a-z0-9] runs, minus stopwords
/// and pure-digit tokens. Ordered so iteration is deterministic.
using TokenSet = std::set<std::string>;

/// Stopword list loaded from a one-word-per-line text file.
class Stopwords {
 public:
  Stopwords() = default;
  explicit Stopwords(std::unordered_set<std::string> words) : words_(std::move(words)) {}

  /// Blank lines and lines starting with '#' are ignored; words are lowercased.
  static Stopwords load(const std::filesystem::path& path);

  [[nodiscard]] bool contains(std::string_view word) const {
    return words_.contains(std::string(word));
  }
  [[nodiscard]] std::size_t size() const noexcept { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

class Tokenizer {
 public:
  explicit Tokenizer(Stopwords stopwords) : stopwords_(std::move(stopwords)) {}

  /// Content tokens in order of appearance, duplicates kept (term-frequency view).
  [[nodiscard]] std::vector<std::string> terms(std::string_view text) const;

  /// Content tokens with set semantics.
  [[nodiscard]] TokenSet tokenize(std::string_view text) const;

  [[nodiscard]] const Stopwords& stopwords() const noexcept { return stopwords_; }

 private:
  Stopwords stopwords_;
};

/// Splits on runs of '.', '!' or '?' followed by whitespace or end of text.
/// Segments keep their terminator, are trimmed, and empty ones are dropped.
[[nodiscard]] std::vector<std::string> split_sentences(std::string_view text);

/// First `limit` UTF-8 code points of `text`.
[[nodiscard]] std::string truncate_chars(std::string_view text, std::size_t limit);

/// Number of UTF-8 code points.
[[nodiscard]] std::size_t count_chars(std::string_view text) noexcept;

[[nodiscard]] std::string trim(std::string_view text);

/// |a ∩ b| / |a ∪ b|; 0.0 when both are empty.
[[nodiscard]] double jaccard(const TokenSet& a, const TokenSet& b) noexcept;

[[nodiscard]] std::size_t intersection_size(const TokenSet& a, const TokenSet& b) noexcept;

}  // namespace poolrank
