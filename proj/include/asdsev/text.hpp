#pragma once

#include <string>
#include <string_view>

namespace asdsev::text {

// UTF-8 <-> code points. Invalid byte sequences decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(const std::u32string& cps);

// Precomposed Hangul syllable block U+AC00..U+D7A3.
inline bool is_hangul_syllable(char32_t c) { return c >= 0xAC00 && c <= 0xD7A3; }

// Canonical composition of conjoining jamo (L+V[+T]) into precomposed
// syllables, the Hangul part of NFC.
std::u32string compose_hangul(const std::u32string& cps);

// Normalization applied before any metric or model input: Hangul
// composition, punctuation replaced by spaces, whitespace runs collapsed
// to single spaces, ends trimmed. Idempotent.
std::string normalize(std::string_view s);

}  // namespace asdsev::text
