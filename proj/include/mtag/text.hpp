#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

namespace mtag {

// Lowercases ASCII, splits on every byte that is not an ASCII letter/digit,
// and keeps tokens of at least two bytes. Bytes >= 0x80 count as word
// characters so multi-byte UTF-8 letters are never cut apart. No stemming,
// no stopword list.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2) tokens.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z')
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80)
      cur.push_back(static_cast<char>(c));
    else
      flush();
  }
  flush();
  return tokens;
}

// True when `needle` occurs as a contiguous run inside `haystack`.
// An empty needle never matches.
inline bool contains_sequence(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace mtag
