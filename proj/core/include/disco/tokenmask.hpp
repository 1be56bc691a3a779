#pragma once

#include "disco/tokens.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace disco::tokenmask {

// Security-localization masks over the (reasoning, code) extent of a
// preference pair. Position p is set to 1 when the token at p is part of the
// security-relevant edit between the insecure and secure code, i.e. it does
// not belong to the common-subsequence alignment of the two code bodies.
// Reasoning positions are never set.
struct MaskPair {
  std::vector<std::uint8_t> m_plus;   // length r_len + y_plus_len
  std::vector<std::uint8_t> m_minus;  // length r_len + y_minus_len
  std::size_t r_len = 0;
  std::size_t y_plus_len = 0;
  std::size_t y_minus_len = 0;
  double pct_plus = 0.0;   // % of code positions set in m_plus
  double pct_minus = 0.0;  // % of code positions set in m_minus
  bool degenerate = false;  // the two code bodies are token-identical

  bool all_zero() const;
};

// Canonical maximal alignment between two token sequences: among all
// longest-common-subsequence alignments, the one whose (i, j) match pairs are
// lexicographically smallest. Greedy earliest-match walks are not equivalent;
// each pair is chosen as the smallest (i, j) that still preserves the
// remaining common-subsequence length.
std::vector<std::pair<std::size_t, std::size_t>> align_tokens(
    std::span<const Token> a, std::span<const Token> b);

MaskPair compute_masks(std::span<const Token> reasoning,
                       std::span<const Token> y_plus,
                       std::span<const Token> y_minus);

}  // namespace disco::tokenmask
