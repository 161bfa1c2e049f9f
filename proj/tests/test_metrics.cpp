#include <doctest.h>

#include "bwc/errors.hpp"
#include "bwc/metrics.hpp"
#include "bwc/rng.hpp"

using namespace bwc;
using Tokens = std::vector<std::string>;

namespace {

// Plain recursive edit distance, no memo: the oracle.
std::size_t brute(const Tokens& a, std::size_t i, const Tokens& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  if (a[i] == b[j]) return brute(a, i + 1, b, j + 1);
  return 1 + std::min({brute(a, i + 1, b, j + 1), brute(a, i + 1, b, j), brute(a, i, b, j + 1)});
}

}  // namespace

TEST_CASE("edit_alignment examples") {
  CHECK(edit_alignment(Tokens{"a", "b", "c"}, Tokens{"a", "b", "c"}) == EditCounts{0, 0, 0, 3});
  CHECK(edit_alignment(Tokens{"a", "b", "c"}, Tokens{"a", "x", "c"}) == EditCounts{1, 0, 0, 3});
  CHECK(edit_alignment(Tokens{}, Tokens{"a", "a"}) == EditCounts{0, 0, 2, 0});
  CHECK(edit_alignment(Tokens{"a", "b"}, Tokens{}) == EditCounts{0, 2, 0, 2});
}

TEST_CASE("edit_alignment matches brute force on short random sequences") {
  Rng rng(9);
  for (int it = 0; it < 2000; ++it) {
    Tokens a, b;
    for (std::size_t i = 0, n = rng.below(7); i < n; ++i) a.push_back(std::string(1, char('a' + rng.below(3))));
    for (std::size_t i = 0, n = rng.below(7); i < n; ++i) b.push_back(std::string(1, char('a' + rng.below(3))));
    const auto c = edit_alignment(a, b);
    CHECK(c.errors() == brute(a, 0, b, 0));
    CHECK(c.substitutions + c.deletions <= c.reference_length);
    CHECK(c.reference_length + c.insertions - c.deletions == b.size());
  }
}

TEST_CASE("token and character alignments agree on both sides of the intern cutoff") {
  Rng rng(12);
  for (std::size_t len : {3u, 60u, 64u, 65u, 150u}) {
    for (int t = 0; t < 20; ++t) {
      std::string a, b;
      Tokens ta, tb;
      for (std::size_t i = 0; i < len; ++i) {
        a.push_back(static_cast<char>('a' + rng.below(4)));
        ta.emplace_back(1, a.back());
      }
      for (std::size_t i = 0, m = len + rng.below(5); i < m; ++i) {
        b.push_back(static_cast<char>('a' + rng.below(4)));
        tb.emplace_back(1, b.back());
      }
      CHECK(edit_alignment(ta, tb) == edit_alignment(a, b));
    }
  }
}

TEST_CASE("wer examples") {
  CHECK(wer("the car is red", "the car is red").value == 0.0);
  CHECK(wer("license and registration please", "license and registration").value == doctest::Approx(0.25));
  CHECK(wer("Yeah. [unintelligible].", "Yeah.").value == 0.0);
  const auto empty = wer("", "");
  CHECK(empty.value == 0.0);
  CHECK_FALSE(empty.degenerate);
  const auto degen = wer("[noise]", "two words");
  CHECK(degen.degenerate);
  CHECK(degen.value == 2.0);
}

TEST_CASE("hypothesis is scrubbed, reference is not") {
  std::string hyp = "stop";
  for (int i = 0; i < 11; ++i) hyp += " you";
  CHECK(wer("stop", hyp).value == 0.0);
  CHECK(wer(hyp, "stop").value > 0.9);
}

TEST_CASE("cer examples") {
  CHECK(cer("hello there", "hello there").value == 0.0);
  CHECK(cer("cat", "cut").value == doctest::Approx(1.0 / 3.0));
  CHECK(cer("ab", "").value == 1.0);
}

TEST_CASE("wer_no_subs uses the same alignment") {
  CHECK(wer("a b c", "a x c").value == doctest::Approx(1.0 / 3.0));
  CHECK(wer_no_subs("a b c", "a x c").value == 0.0);
  CHECK(wer_no_subs("a b", "a b").value == 0.0);
  CHECK(wer_no_subs("a b", "a b c").value == 0.5);
}

TEST_CASE("min_wer") {
  const std::vector<std::string> h1{"one two three", "garbage"};
  CHECK(min_wer("one two three", h1).second == 0);
  CHECK(min_wer("one two three", h1).first.value == 0.0);
  // 0.4 then 0.2
  const std::vector<std::string> h2{"a b c", "a b c d"};
  const auto r2 = min_wer("a b c d e", h2);
  CHECK(r2.first.value == doctest::Approx(0.2));
  CHECK(r2.second == 1);
  const std::vector<std::string> tie{"x y", "y z"};
  CHECK(min_wer("x y z", tie).second == 0);
  CHECK_THROWS_AS(min_wer("a", std::vector<std::string>{}), PreconditionError);
}

TEST_CASE("concat_wer") {
  const auto s = [](double a, double b) { return Segment::from_seconds(a, b); };
  const std::vector<TimedText> ref{{s(0, 1), "a b"}, {s(2, 3), "c d e"}};
  CHECK(concat_wer(ref, ref).value == 0.0);
  const std::vector<TimedText> one{{s(0, 3), "a b c d e"}};
  CHECK(concat_wer(ref, one).value == 0.0);
  const std::vector<TimedText> missing{{s(2, 3), "c d e"}};
  CHECK(concat_wer(ref, missing).value == doctest::Approx(2.0 / 5.0));
  const std::vector<TimedText> unsorted{{s(2, 3), "c d e"}, {s(0, 1), "a b"}};
  CHECK_THROWS_AS(concat_wer(unsorted, ref), PreconditionError);
  CHECK_THROWS_AS(concat_wer(ref, unsorted), PreconditionError);
  CHECK(concat_text(ref) == "a b c d e");
}

TEST_CASE("metric laws on random pairs") {
  Rng rng(4);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "[x]", "E"};
  for (int it = 0; it < 1000; ++it) {
    std::string r, h;
    for (std::size_t i = 0, n = rng.below(8); i < n; ++i) r += vocab[rng.below(vocab.size())] + " ";
    for (std::size_t i = 0, n = rng.below(8); i < n; ++i) h += vocab[rng.below(vocab.size())] + " ";
    CHECK(wer(r, r).value == 0.0);
    CHECK(wer_no_subs(r, h).value <= wer(r, h).value);
  }
}
