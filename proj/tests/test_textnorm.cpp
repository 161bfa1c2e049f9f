#include <doctest.h>

#include <map>

#include "bwc/errors.hpp"
#include "bwc/rng.hpp"
#include "bwc/textnorm.hpp"

using namespace bwc;
using Tokens = std::vector<std::string>;

TEST_CASE("strip_bracketed") {
  CHECK(strip_bracketed("Yeah. [unintelligible].") == "Yeah. .");
  CHECK(strip_bracketed("no brackets here") == "no brackets here");
  CHECK(strip_bracketed("[laughter] ok [x] go") == "ok go");
  CHECK(strip_bracketed("keep this [but not this") == "keep this");
  CHECK(strip_bracketed("a [outer [inner] still] b") == "a b");
  CHECK(strip_bracketed("") == "");
}

TEST_CASE("normalize") {
  CHECK(normalize("Yeah. I know, I'm trying to--").tokens == Tokens{"yeah", "i", "know", "i'm", "trying", "to"});
  CHECK(normalize("").tokens.empty());
  CHECK(normalize("STOP\xE2\x80\x94stop\xE2\x80\xA6 stop!").tokens == Tokens{"stop", "stop", "stop"});
  CHECK(normalize("la--").tokens == Tokens{"la"});
  CHECK(normalize("'quoted' rock'n'roll 90's").tokens == Tokens{"quoted", "rock'n'roll", "90", "s"});
  CHECK(normalize("Turn [static] LEFT").char_string() == "turn left");
}

TEST_CASE("scrub_repetitions") {
  std::string twelve;
  for (int i = 0; i < 12; ++i) twelve += "no ";
  CHECK(scrub_repetitions(twelve + "stop") == "stop");
  CHECK(scrub_repetitions("a b c") == "a b c");
  std::string ten;
  for (int i = 0; i < 10; ++i) ten += (i ? " " : "") + std::string("go");
  CHECK(scrub_repetitions(ten) == ten);
  CHECK(scrub_repetitions("No no NO no", 3) == "");
  CHECK_THROWS_AS(scrub_repetitions("x", 0), PreconditionError);
}

TEST_CASE("collapse_runs mode only collapses long consecutive runs") {
  CHECK(scrub_repetitions("a a a b a", 2, ScrubMode::collapse_runs) == "a b a");
  CHECK(scrub_repetitions("a a b", 2, ScrubMode::collapse_runs) == "a a b");
}

TEST_CASE("normalize properties over random strings") {
  const std::string alphabet = "abcXYZ019' -.,[]!?\t";
  Rng rng(1);
  for (int iter = 0; iter < 3000; ++iter) {
    std::string s;
    const auto len = rng.below(30);
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
    const auto n = normalize(s);
    CHECK(normalize(n.char_string()) == n);
    for (const auto& t : n.tokens) {
      CHECK(!t.empty());
      for (char c : t) {
        CHECK(!(c >= 'A' && c <= 'Z'));
        CHECK(c != '[');
        CHECK(c != ']');
        CHECK(c != ' ');
      }
    }
    const auto once = strip_bracketed(s);
    CHECK(strip_bracketed(once) == once);
    CHECK(once.size() <= s.size());
  }
}

TEST_CASE("scrub output is a sub-multiset of the input") {
  Rng rng(2);
  const Tokens vocab{"a", "b", "A", "c"};
  for (int iter = 0; iter < 500; ++iter) {
    std::string s;
    const auto len = rng.below(40);
    for (std::size_t i = 0; i < len; ++i) s += vocab[rng.below(vocab.size())] + " ";
    const auto in = split_whitespace(s);
    const auto out = split_whitespace(scrub_repetitions(s, 5));
    std::map<std::string, int> count;
    for (const auto& t : in) ++count[t];
    for (const auto& t : out) CHECK(--count[t] >= 0);
  }
}
