#include "disco/tokenmask.hpp"

#include <algorithm>

namespace disco::tokenmask {

bool MaskPair::all_zero() const {
  auto is_zero = [](std::uint8_t v) { return v == 0; };
  return std::all_of(m_plus.begin(), m_plus.end(), is_zero) &&
         std::all_of(m_minus.begin(), m_minus.end(), is_zero);
}

namespace {

// L[i][j] = longest common subsequence length of suffixes a[i:], b[j:].
std::vector<std::size_t> suffix_lcs_table(std::span<const Token> a,
                                          std::span<const Token> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> table((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& {
    return table[i * (m + 1) + j];
  };
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = m; j-- > 0;) {
      std::size_t best = std::max(at(i + 1, j), at(i, j + 1));
      if (a[i] == b[j]) best = std::max(best, at(i + 1, j + 1) + 1);
      at(i, j) = best;
    }
  }
  return table;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> align_tokens(
    std::span<const Token> a, std::span<const Token> b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::vector<std::size_t> table = suffix_lcs_table(a, b);
  auto at = [&](std::size_t i, std::size_t j) { return table[i * (m + 1) + j]; };

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t i0 = 0;
  std::size_t j0 = 0;
  std::size_t remaining = at(0, 0);
  pairs.reserve(remaining);
  while (remaining > 0) {
    bool found = false;
    for (std::size_t i = i0; i < n && !found; ++i) {
      if (at(i, j0) < remaining) break;  // no later row can reach the target
      for (std::size_t j = j0; j < m; ++j) {
        if (at(i, j) < remaining) break;
        if (a[i] == b[j] && at(i + 1, j + 1) == remaining - 1) {
          pairs.emplace_back(i, j);
          i0 = i + 1;
          j0 = j + 1;
          found = true;
          break;
        }
      }
    }
    --remaining;
  }
  return pairs;
}

MaskPair compute_masks(std::span<const Token> reasoning,
                       std::span<const Token> y_plus,
                       std::span<const Token> y_minus) {
  MaskPair masks;
  masks.r_len = reasoning.size();
  masks.y_plus_len = y_plus.size();
  masks.y_minus_len = y_minus.size();
  masks.m_plus.assign(masks.r_len + masks.y_plus_len, 0);
  masks.m_minus.assign(masks.r_len + masks.y_minus_len, 0);
  masks.degenerate = y_plus.size() == y_minus.size() &&
                     std::equal(y_plus.begin(), y_plus.end(), y_minus.begin());

  std::vector<std::uint8_t> plus_unmatched(y_plus.size(), 1);
  std::vector<std::uint8_t> minus_unmatched(y_minus.size(), 1);
  for (const auto& [i, j] : align_tokens(y_plus, y_minus)) {
    plus_unmatched[i] = 0;
    minus_unmatched[j] = 0;
  }
  std::size_t plus_set = 0;
  std::size_t minus_set = 0;
  for (std::size_t i = 0; i < y_plus.size(); ++i) {
    if (plus_unmatched[i]) {
      masks.m_plus[masks.r_len + i] = 1;
      ++plus_set;
    }
  }
  for (std::size_t j = 0; j < y_minus.size(); ++j) {
    if (minus_unmatched[j]) {
      masks.m_minus[masks.r_len + j] = 1;
      ++minus_set;
    }
  }
  masks.pct_plus = y_plus.empty() ? 0.0 : 100.0 * static_cast<double>(plus_set) /
                                              static_cast<double>(y_plus.size());
  masks.pct_minus = y_minus.empty() ? 0.0 : 100.0 * static_cast<double>(minus_set) /
                                                static_cast<double>(y_minus.size());
  return masks;
}

}  // namespace disco::tokenmask
