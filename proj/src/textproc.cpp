#include "poolrank/textproc.hpp"

#include <algorithm>
#include <fstream>

#include "poolrank/error.hpp"

namespace poolrank {

namespace {

constexpr bool is_alnum_ascii(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

constexpr char to_lower_ascii(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr bool is_terminator(char c) noexcept { return c == '.' || c == '!' || c == '?'; }

bool all_digits(std::string_view s) noexcept {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

template <typename Sink>
void for_each_content_token(std::string_view text, const Stopwords& stopwords, Sink&& sink) {
  std::string token;
  auto flush = [&] {
    if (!token.empty() && !all_digits(token) && !stopwords.contains(token)) sink(token);
    token.clear();
  };
  for (const char c : text) {
    if (is_alnum_ascii(c)) {
      token.push_back(to_lower_ascii(c));
    } else {
      flush();
    }
  }
  flush();
}

}  // namespace

Stopwords Stopwords::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stopword list " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = trim(line);
    if (w.empty() || w.front() == '#') continue;
    std::transform(w.begin(), w.end(), w.begin(), to_lower_ascii);
    words.insert(std::move(w));
  }
  return Stopwords(std::move(words));
}

std::vector<std::string> Tokenizer::terms(std::string_view text) const {
  std::vector<std::string> out;
  for_each_content_token(text, stopwords_, [&](const std::string& t) { out.push_back(t); });
  return out;
}

TokenSet Tokenizer::tokenize(std::string_view text) const {
  TokenSet out;
  for_each_content_token(text, stopwords_, [&](const std::string& t) { out.insert(t); });
  return out;
}

std::string trim(std::string_view text) {
  const auto first = std::find_if_not(text.begin(), text.end(), is_space);
  const auto last = std::find_if_not(text.rbegin(), text.rend(), is_space).base();
  return first < last ? std::string(first, last) : std::string{};
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  const auto n = text.size();
  auto emit = [&](std::size_t end) {
    auto s = trim(text.substr(start, end - start));
    if (!s.empty()) out.push_back(std::move(s));
    start = end;
  };
  while (i < n) {
    if (!is_terminator(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminator(text[j])) ++j;
    if (j == n || is_space(text[j])) emit(j);
    i = j;
  }
  if (start < n) emit(n);
  return out;
}

namespace {
constexpr bool is_continuation(unsigned char c) noexcept { return (c & 0xC0) == 0x80; }
}  // namespace

std::size_t count_chars(std::string_view text) noexcept {
  return static_cast<std::size_t>(std::count_if(text.begin(), text.end(), [](char c) {
    return !is_continuation(static_cast<unsigned char>(c));
  }));
}

std::string truncate_chars(std::string_view text, std::size_t limit) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_continuation(static_cast<unsigned char>(text[i]))) continue;
    if (seen == limit) return std::string(text.substr(0, i));
    ++seen;
  }
  return std::string(text);
}

std::size_t intersection_size(const TokenSet& a, const TokenSet& b) noexcept {
  std::size_t n = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++n;
      ++ia;
      ++ib;
    }
  }
  return n;
}

double jaccard(const TokenSet& a, const TokenSet& b) noexcept {
  const auto inter = intersection_size(a, b);
  const auto uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace poolrank
