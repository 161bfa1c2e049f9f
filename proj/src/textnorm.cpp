#include "bwc/textnorm.hpp"

#include <unordered_map>

#include "bwc/errors.hpp"

namespace bwc {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = ascii_lower(c);
  return out;
}

}  // namespace

std::string NormalizedText::char_string() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string strip_bracketed(std::string_view text) {
  std::string kept;
  kept.reserve(text.size());
  int depth = 0;
  for (char c : text) {
    if (c == '[') {
      ++depth;
    } else if (c == ']' && depth > 0) {
      --depth;
    } else if (depth == 0) {
      kept.push_back(c);
    }
  }
  return collapse_whitespace(kept);
}

NormalizedText normalize(std::string_view text) {
  const std::string s = lowercase(strip_bracketed(text));
  std::string cleaned(s.size(), ' ');
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (is_lower(c) || is_digit(c)) {
      cleaned[i] = c;
    } else if (c == '\'' && i > 0 && i + 1 < s.size() && is_lower(s[i - 1]) && is_lower(s[i + 1])) {
      cleaned[i] = c;
    }
  }
  return NormalizedText{split_whitespace(cleaned)};
}

std::string scrub_repetitions(std::string_view text, int limit, ScrubMode mode) {
  if (limit < 1) throw PreconditionError("scrub limit must be >= 1");
  const auto tokens = split_whitespace(text);
  std::vector<std::string> keys;
  keys.reserve(tokens.size());
  for (const auto& t : tokens) keys.push_back(lowercase(t));

  std::vector<bool> keep(tokens.size(), true);
  if (mode == ScrubMode::remove_all) {
    std::unordered_map<std::string, int> counts;
    for (const auto& k : keys) ++counts[k];
    for (std::size_t i = 0; i < tokens.size(); ++i) keep[i] = counts[keys[i]] <= limit;
  } else {
    std::size_t i = 0;
    while (i < tokens.size()) {
      std::size_t j = i + 1;
      while (j < tokens.size() && keys[j] == keys[i]) ++j;
      if (static_cast<int>(j - i) > limit) {
        for (std::size_t k = i + 1; k < j; ++k) keep[k] = false;
      }
      i = j;
    }
  }

  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!keep[i]) continue;
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace bwc
