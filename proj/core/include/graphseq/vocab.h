#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace graphseq {

// Reserved token ids. These are fixed and never change between runs.
namespace tok {
inline constexpr int kPN = 0;   // <PN> predecessor node
inline constexpr int kE = 1;    // <E>  edge
inline constexpr int kSN = 2;   // <SN> successor node
inline constexpr int kD = 3;    // <D>  disambiguation
inline constexpr int kBOS = 4;
inline constexpr int kEOS = 5;
inline constexpr int kPAD = 6;
inline constexpr int kSEP = 7;
inline constexpr int kNumSpecial = 8;
}  // namespace tok

// Byte-level vocabulary: the 8 special tokens followed by one token per
// printable ASCII byte (0x20..0x7e).
inline constexpr int kFirstPrintable = 0x20;
inline constexpr int kLastPrintable = 0x7e;
inline constexpr int kVocabSize =
    tok::kNumSpecial + (kLastPrintable - kFirstPrintable + 1);

inline constexpr bool is_special(int id) {
  return id >= 0 && id < tok::kNumSpecial;
}
inline constexpr bool is_byte_token(int id) {
  return id >= tok::kNumSpecial && id < kVocabSize;
}
inline constexpr int byte_token(char c) {
  return tok::kNumSpecial + (static_cast<unsigned char>(c) - kFirstPrintable);
}
inline constexpr char token_byte(int id) {
  return static_cast<char>(id - tok::kNumSpecial + kFirstPrintable);
}
inline constexpr bool is_digit_token(int id) {
  return is_byte_token(id) && token_byte(id) >= '0' && token_byte(id) <= '9';
}

// Markup string of a token, e.g. "<PN>" or "C".
std::string token_text(int id);

// Special markup maps to its reserved id; every other byte maps to its byte
// token. Throws TokenizerError on a non-printable byte.
std::vector<int> encode(std::string_view text);

// Throws TokenizerError on an id outside the vocabulary.
std::string decode(std::span<const int> ids);

}  // namespace graphseq
