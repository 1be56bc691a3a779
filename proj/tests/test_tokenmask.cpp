#include "disco/rng.hpp"
#include "disco/tokenmask.hpp"

#include <doctest.h>

#include <algorithm>
#include <utility>
#include <vector>

namespace {

using disco::Token;
using disco::TokenSeq;
using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

// Independent oracle. Enumerates EVERY maximal common-subsequence alignment
// via the prefix LCS recurrence, then picks the lexicographically smallest
// pair list. Exponential, so inputs stay tiny.
std::size_t lcs_len(const TokenSeq& a, const TokenSeq& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::vector<std::size_t>> dp(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      dp[i][j] = std::max(dp[i - 1][j], dp[i][j - 1]);
      if (a[i - 1] == b[j - 1]) dp[i][j] = std::max(dp[i][j], dp[i - 1][j - 1] + 1);
    }
  }
  return dp[n][m];
}

void enumerate_alignments(const TokenSeq& a, const TokenSeq& b, std::size_t i,
                          std::size_t j, std::size_t remaining, Pairs& current,
                          std::vector<Pairs>& out) {
  if (remaining == 0) {
    out.push_back(current);
    return;
  }
  for (std::size_t ii = i; ii < a.size(); ++ii) {
    for (std::size_t jj = j; jj < b.size(); ++jj) {
      if (a[ii] != b[jj]) continue;
      const TokenSeq rest_a(a.begin() + static_cast<std::ptrdiff_t>(ii) + 1, a.end());
      const TokenSeq rest_b(b.begin() + static_cast<std::ptrdiff_t>(jj) + 1, b.end());
      if (1 + lcs_len(rest_a, rest_b) != remaining) continue;
      current.emplace_back(ii, jj);
      enumerate_alignments(a, b, ii + 1, jj + 1, remaining - 1, current, out);
      current.pop_back();
    }
  }
}

Pairs oracle_align(const TokenSeq& a, const TokenSeq& b) {
  std::vector<Pairs> all;
  Pairs current;
  enumerate_alignments(a, b, 0, 0, lcs_len(a, b), current, all);
  REQUIRE(!all.empty());
  return *std::min_element(all.begin(), all.end());
}

TokenSeq random_seq(disco::Rng& rng, std::size_t max_len, Token alphabet) {
  TokenSeq seq(rng.bounded(max_len + 1));
  for (Token& t : seq) t = static_cast<Token>(1 + rng.bounded(static_cast<std::size_t>(alphabet)));
  return seq;
}

}  // namespace

TEST_CASE("alignment matches the enumeration oracle on random pairs") {
  disco::Rng rng(20240521);
  for (int trial = 0; trial < 400; ++trial) {
    const TokenSeq a = random_seq(rng, 9, 3);
    const TokenSeq b = random_seq(rng, 9, 3);
    const Pairs got = disco::tokenmask::align_tokens(a, b);
    const Pairs want = oracle_align(a, b);
    REQUIRE_MESSAGE(got == want, "trial ", trial);
  }
}

TEST_CASE("alignment pairs are the lex-min choice, not the greedy walk") {
  // a = [1,2,1], b = [2,1]: LCS length 2 is only achievable as (1,0),(2,1).
  // A greedy earliest-match walk would pair (0,1) first and stall at length 1.
  const TokenSeq a{1, 2, 1};
  const TokenSeq b{2, 1};
  const Pairs got = disco::tokenmask::align_tokens(a, b);
  const Pairs want{{1, 0}, {2, 1}};
  CHECK(got == want);
}

TEST_CASE("worked mask example: one substitution plus one insertion") {
  // y- = A B C D, y+ = A B X Y D, reasoning length 2.
  const TokenSeq reasoning{9, 9};
  const TokenSeq y_minus{65, 66, 67, 68};
  const TokenSeq y_plus{65, 66, 88, 89, 68};
  const auto masks = disco::tokenmask::compute_masks(reasoning, y_plus, y_minus);
  CHECK(masks.r_len == 2);
  CHECK(masks.m_minus == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 0});
  CHECK(masks.m_plus == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 0});
  CHECK(masks.pct_minus == doctest::Approx(25.0));
  CHECK(masks.pct_plus == doctest::Approx(40.0));
  CHECK(!masks.degenerate);
  CHECK(!masks.all_zero());
}

TEST_CASE("identical code bodies are degenerate and fully unmasked") {
  const TokenSeq reasoning{1, 2, 3};
  const TokenSeq code{10, 11, 12};
  const auto masks = disco::tokenmask::compute_masks(reasoning, code, code);
  CHECK(masks.degenerate);
  CHECK(masks.all_zero());
  CHECK(masks.pct_plus == 0.0);
  CHECK(masks.pct_minus == 0.0);
}

TEST_CASE("disjoint code bodies are fully masked") {
  const TokenSeq reasoning{};
  const TokenSeq y_plus{1, 2};
  const TokenSeq y_minus{3, 4, 5};
  const auto masks = disco::tokenmask::compute_masks(reasoning, y_plus, y_minus);
  CHECK(masks.m_plus == std::vector<std::uint8_t>{1, 1});
  CHECK(masks.m_minus == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(masks.pct_plus == doctest::Approx(100.0));
  CHECK(masks.pct_minus == doctest::Approx(100.0));
}

TEST_CASE("empty sides behave") {
  const TokenSeq empty{};
  const TokenSeq reasoning{7};
  const TokenSeq code{1, 2};
  auto masks = disco::tokenmask::compute_masks(reasoning, empty, code);
  CHECK(masks.m_plus == std::vector<std::uint8_t>{0});
  CHECK(masks.m_minus == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(masks.pct_plus == 0.0);

  masks = disco::tokenmask::compute_masks(empty, empty, empty);
  CHECK(masks.degenerate);  // identical (both empty)
  CHECK(masks.all_zero());
}

TEST_CASE("reasoning positions are never flagged") {
  disco::Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const TokenSeq reasoning = random_seq(rng, 6, 3);
    const TokenSeq y_plus = random_seq(rng, 8, 3);
    const TokenSeq y_minus = random_seq(rng, 8, 3);
    const auto masks = disco::tokenmask::compute_masks(reasoning, y_plus, y_minus);
    for (std::size_t i = 0; i < masks.r_len; ++i) {
      CHECK(masks.m_plus[i] == 0);
      CHECK(masks.m_minus[i] == 0);
    }
  }
}
