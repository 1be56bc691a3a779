#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace disco {

// The built-in policy model is byte-level: token ids are raw byte values.
// Id 0 doubles as the end-of-sequence marker; it never occurs in UTF-8 text.
using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

inline constexpr Token kEndOfSequence = 0;

// Markers used when assembling a training/inference sequence from an
// instruction, a security reasoning paragraph, and a code body. The same
// response marker is what code extraction falls back to.
inline constexpr std::string_view kInstructionHeader = "### Instruction:\n";
inline constexpr std::string_view kThoughtHeader = "\n### Security Thought:\n";
inline constexpr std::string_view kResponseMarker = "### Response:";

TokenSeq encode_bytes(std::string_view text);
std::string decode_bytes(const TokenSeq& tokens);  // stops at end-of-sequence

// Region texts for one example. The prompt carries the instruction scaffold;
// the reasoning region ends with the response marker so that generation flows
// reasoning -> marker -> code; the code region is terminated by EOS when
// encoded.
struct SequenceRegions {
  std::string prompt;     // "### Instruction:\n<x>\n### Security Thought:\n"
  std::string reasoning;  // "<r>\n### Response:\n"  (r may be empty)
  std::string code;       // raw code body
};

SequenceRegions make_regions(std::string_view instruction,
                             std::string_view reasoning,
                             std::string_view code);

// Encoded form: prompt/reasoning are plain byte tokens; code gains a trailing
// end-of-sequence token.
struct EncodedRegions {
  TokenSeq prompt;
  TokenSeq reasoning;
  TokenSeq code;
};

EncodedRegions encode_regions(const SequenceRegions& regions);

}  // namespace disco
