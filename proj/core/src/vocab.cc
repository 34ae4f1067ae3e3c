#include "graphseq/vocab.h"

#include <array>

#include "graphseq/errors.h"

namespace graphseq {

namespace {

constexpr std::array<std::string_view, tok::kNumSpecial> kSpecialText = {
    "<PN>", "<E>", "<SN>", "<D>", "<BOS>", "<EOS>", "<PAD>", "<SEP>"};

}  // namespace

std::string token_text(int id) {
  if (is_special(id)) return std::string(kSpecialText[id]);
  if (is_byte_token(id)) return std::string(1, token_byte(id));
  throw TokenizerError("unknown token id " + std::to_string(id));
}

std::vector<int> encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '<') {
      bool matched = false;
      for (int s = 0; s < tok::kNumSpecial; ++s) {
        if (text.substr(i).starts_with(kSpecialText[s])) {
          ids.push_back(s);
          i += kSpecialText[s].size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < kFirstPrintable || c > kLastPrintable) {
      throw TokenizerError("non-printable byte " + std::to_string(c) +
                           " at offset " + std::to_string(i));
    }
    ids.push_back(byte_token(text[i]));
    ++i;
  }
  return ids;
}

std::string decode(std::span<const int> ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (is_special(id)) {
      out += kSpecialText[id];
    } else if (is_byte_token(id)) {
      out += token_byte(id);
    } else {
      throw TokenizerError("unknown token id " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace graphseq
