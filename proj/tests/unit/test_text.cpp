#include <string>

#include "asdsev/text.hpp"
#include "doctest.h"

using namespace asdsev;

TEST_CASE("utf8 round trip") {
  const std::string samples[] = {"", "abc", "안녕하세요", "한국어 text 123",
                                 "\xF0\x9F\x98\x80"};  // emoji
  for (const std::string& s : samples)
    CHECK(text::encode_utf8(text::decode_utf8(s)) == s);
}

TEST_CASE("invalid utf8 decodes to replacement") {
  const std::u32string cps = text::decode_utf8("\xFF\xFEok");
  REQUIRE(cps.size() == 4);
  CHECK(cps[0] == 0xFFFD);
  CHECK(cps[1] == 0xFFFD);
  CHECK(cps[2] == U'o');
}

TEST_CASE("hangul jamo composition") {
  // U+1112 U+1161 U+11AB composes to U+D55C
  const std::u32string jamo = {0x1112, 0x1161, 0x11AB};
  const std::u32string composed = text::compose_hangul(jamo);
  REQUIRE(composed.size() == 1);
  CHECK(composed[0] == 0xD55C);

  // LV without trailing consonant: U+1100 U+1161 -> U+AC00
  const std::u32string ga = {0x1100, 0x1161};
  CHECK(text::compose_hangul(ga) == std::u32string{0xAC00});
}

TEST_CASE("normalize collapses whitespace and trims") {
  CHECK(text::normalize("  안녕   하세요\t\n") == "안녕 하세요");
  CHECK(text::normalize("a  b") == "a b");
  CHECK(text::normalize("") == "");
  CHECK(text::normalize("   ") == "");
}

TEST_CASE("normalize strips punctuation") {
  CHECK(text::normalize("안녕, 하세요!") == "안녕 하세요");
  CHECK(text::normalize("[MASK]") == "MASK");  // raw text cannot smuggle a mask
  CHECK(text::normalize("그래…") == "그래");
}

TEST_CASE("normalize composes jamo input") {
  // decomposed "한" followed by composed "글"
  const std::string decomposed = "\xE1\x84\x92\xE1\x85\xA1\xE1\x86\xAB글";
  CHECK(text::normalize(decomposed) == "한글");
}

TEST_CASE("normalize is idempotent") {
  const std::string samples[] = {"  안녕,  하세요 ", "a.b.c", "한 글",
                                 "mixed 한글 and latin!"};
  for (const std::string& s : samples) {
    const std::string once = text::normalize(s);
    CHECK(text::normalize(once) == once);
  }
}
