#include "disco/tokens.hpp"

namespace disco {

TokenSeq encode_bytes(std::string_view text) {
  TokenSeq out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<Token>(c));
  return out;
}

std::string decode_bytes(const TokenSeq& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (Token t : tokens) {
    if (t == kEndOfSequence) break;
    out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  }
  return out;
}

SequenceRegions make_regions(std::string_view instruction,
                             std::string_view reasoning,
                             std::string_view code) {
  SequenceRegions regions;
  regions.prompt.reserve(kInstructionHeader.size() + instruction.size() + kThoughtHeader.size());
  regions.prompt.append(kInstructionHeader);
  regions.prompt.append(instruction);
  regions.prompt.append(kThoughtHeader);
  regions.reasoning.append(reasoning);
  regions.reasoning.append("\n");
  regions.reasoning.append(kResponseMarker);
  regions.reasoning.append("\n");
  regions.code.assign(code);
  return regions;
}

EncodedRegions encode_regions(const SequenceRegions& regions) {
  EncodedRegions enc;
  enc.prompt = encode_bytes(regions.prompt);
  enc.reasoning = encode_bytes(regions.reasoning);
  enc.code = encode_bytes(regions.code);
  enc.code.push_back(kEndOfSequence);
  return enc;
}

}  // namespace disco
