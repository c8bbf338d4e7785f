#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace steerlab {

// Byte-level tokenization: token id == byte value, vocab 256. Every string
// tokenizes. Byte 0x00 never occurs in text and is reserved as the
// end-of-text marker that training samples are terminated with and that
// generation stops on.
constexpr int kEndOfText = 0;

inline std::vector<int> tokenize_bytes(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(static_cast<int>(c));
  return out;
}

inline std::string detokenize_bytes(const std::vector<int>& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens)
    if (t != kEndOfText) out.push_back(static_cast<char>(static_cast<unsigned char>(t)));
  return out;
}

}  // namespace steerlab
