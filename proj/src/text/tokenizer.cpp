// SPDX-License-Identifier: Apache-2.0
#include <array>

#include "duet/text.hpp"

namespace duet {
namespace {

struct Special {
  std::string_view text;
  TokenId id;
};

// Longest literal first so greedy matching prefers it.
constexpr std::array<Special, 6> kSpecials{{
    {tok::kImgContextText, tok::kImgContext},
    {tok::kImgEndText, tok::kImgEnd},
    {tok::kImgStartText, tok::kImgStart},
    {"<pad>", tok::kPad},
    {"</s>", tok::kEos},
    {"<s>", tok::kBos},
}};

}  // namespace

std::string_view special_literal(TokenId id) {
  for (const Special& s : kSpecials) {
    if (s.id == id) return s.text;
  }
  return {};
}

std::vector<TokenId> tokenize(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool matched = false;
    if (text[i] == '<') {
      for (const Special& s : kSpecials) {
        if (text.substr(i, s.text.size()) == s.text) {
          ids.push_back(s.id);
          i += s.text.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) ids.push_back(static_cast<unsigned char>(text[i++]));
  }
  return ids;
}

std::string detokenize(const std::vector<TokenId>& ids) {
  std::string out;
  for (TokenId id : ids) {
    if (id < 256) {
      out.push_back(static_cast<char>(id));
    } else {
      out.append(special_literal(id));
    }
  }
  return out;
}

std::string build_prompt(std::size_t n_images, std::string_view question) {
  std::string out;
  for (std::size_t k = 0; k < n_images; ++k) {
    out.append(tok::kImgStartText);
    out.append(tok::kImgContextText);
    out.append(tok::kImgEndText);
  }
  if (n_images > 0) out.push_back('\n');
  out.append(question);
  return out;
}

}  // namespace duet
