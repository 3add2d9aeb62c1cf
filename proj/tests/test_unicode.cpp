#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <set>

#include "canine/unicode_io.hpp"

using namespace canine;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out << contents;
    return path;
}

}  // namespace

TEST_CASE("utf8 decode: ascii and multibyte") {
    auto cps = utf8_decode("a");
    REQUIRE(cps == std::vector<uint32_t>{97});
    // 'é' is a single codepoint 233, not two bytes
    cps = utf8_decode("h\xc3\xa9llo");
    REQUIRE(cps == std::vector<uint32_t>{'h', 233, 'l', 'l', 'o'});
    // astral plane
    cps = utf8_decode("\xf0\x9f\x98\x80");
    REQUIRE(cps == std::vector<uint32_t>{0x1F600});
}

TEST_CASE("utf8 decode: errors carry byte offsets") {
    try {
        utf8_decode("ab\xff");
        FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
        REQUIRE(e.byte_offset == 2);
    }
    REQUIRE_THROWS_AS(utf8_decode("\xc3"), DecodeError);          // truncated
    REQUIRE_THROWS_AS(utf8_decode("\xc0\xaf"), DecodeError);     // overlong
    REQUIRE_THROWS_AS(utf8_decode("\xed\xa0\x80"), DecodeError); // surrogate
}

TEST_CASE("utf8 round trip") {
    std::string s = "héllo wörld ΑΒΓ \xf0\x9f\x98\x80";
    REQUIRE(utf8_encode(utf8_decode(s)) == s);
}

TEST_CASE("special codepoints validated") {
    SpecialCodepoints ok;
    ok.validate();
    SpecialCodepoints dup;
    dup.sep = dup.cls;
    REQUIRE_THROWS_AS(dup.validate(), std::invalid_argument);
    SpecialCodepoints outside;
    outside.pad = 0x41;
    REQUIRE_THROWS_AS(outside.validate(), std::invalid_argument);
}

TEST_CASE("encode_text: 'a' with n=8") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("a", 8, sp);
    REQUIRE(seq.cps == std::vector<uint32_t>{sp.cls, 97, sp.sep, sp.pad, sp.pad, sp.pad, sp.pad,
                                             sp.pad});
}

TEST_CASE("encode_text: accented character is one codepoint") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("h\xc3\xa9llo", 16, sp);
    REQUIRE(seq.at(2) == 233);
    REQUIRE(content_length(seq, sp) == 5);
}

TEST_CASE("encode_text: truncation and exact length") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("abcdefghij", 8, sp);
    REQUIRE(seq.length() == 8);
    REQUIRE(seq.at(0) == sp.cls);
    REQUIRE(seq.at(7) == sp.sep);
    REQUIRE(seq.at(1) == 'a');
    REQUIRE(seq.at(6) == 'f');
    REQUIRE_THROWS_AS(encode_text("x", 1, sp), std::invalid_argument);
}

TEST_CASE("encode_text: lossless for short text") {
    SpecialCodepoints sp;
    std::string text = "héllo wörld";
    CodepointSequence seq = encode_text(text, 64, sp);
    REQUIRE(decode_text(seq, sp) == text);
}

TEST_CASE("encode_text: padding is a contiguous suffix") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("ab cd", 16, sp);
    bool in_pad = false;
    for (uint32_t cp : seq.cps) {
        if (cp == sp.pad) in_pad = true;
        else REQUIRE_FALSE(in_pad);
    }
}

TEST_CASE("whitespace_spans: 'ab cd' with CLS at 0") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("ab cd", 16, sp);
    auto spans = whitespace_spans(seq, sp);
    REQUIRE(spans == std::vector<std::pair<int64_t, int64_t>>{{1, 3}, {4, 6}});
}

TEST_CASE("whitespace_spans: all-whitespace input is empty") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("  \t ", 16, sp);
    REQUIRE(whitespace_spans(seq, sp).empty());
}

TEST_CASE("whitespace_spans: no punctuation splitting") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("a.b", 8, sp);
    auto spans = whitespace_spans(seq, sp);
    REQUIRE(spans.size() == 1);
    REQUIRE(spans[0] == std::pair<int64_t, int64_t>{1, 4});
}

TEST_CASE("whitespace_spans: never includes specials or padding") {
    SpecialCodepoints sp;
    CodepointSequence seq = encode_text("one two three", 32, sp);
    for (auto [s, e] : whitespace_spans(seq, sp))
        for (int64_t i = s; i < e; ++i) {
            REQUIRE_FALSE(sp.is_special(seq.at(i)));
            REQUIRE_FALSE(is_unicode_whitespace(seq.at(i)));
        }
}

TEST_CASE("corpus: deterministic shuffle and multi-epoch repeat") {
    auto path = temp_file("canine_corpus_a.txt", "line one\nline two\nline three\n");
    auto run = [&] {
        CorpusStream s = CorpusStream::from_file(path.string(), 99);
        std::vector<std::string> order;
        for (int i = 0; i < 3; ++i) order.push_back(*s.next());
        return order;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a == b);
    std::multiset<std::string> seen(a.begin(), a.end());
    REQUIRE(seen == std::multiset<std::string>{"line one", "line two", "line three"});

    CorpusStream s = CorpusStream::from_file(path.string(), 99);
    for (int i = 0; i < 7; ++i) REQUIRE(s.next().has_value());
    REQUIRE(s.epoch() == 2);
}

TEST_CASE("corpus: empty file yields empty stream") {
    auto path = temp_file("canine_corpus_empty.txt", "");
    CorpusStream s = CorpusStream::from_file(path.string(), 1);
    REQUIRE(s.empty());
    REQUIRE_FALSE(s.next().has_value());
}

TEST_CASE("corpus: invalid UTF-8 lines are skipped with a counter") {
    auto path = temp_file("canine_corpus_bad.txt", "good\n\xff\xfe\nalso good\n");
    size_t skipped = 0;
    auto lines = load_corpus_lines(path.string(), &skipped);
    REQUIRE(skipped == 1);
    REQUIRE(lines == std::vector<std::string>{"good", "also good"});
}

TEST_CASE("corpus: two shards partition the file") {
    auto path = temp_file("canine_corpus_shard.txt", "a\nb\nc\nd\ne\n");
    std::multiset<std::string> all;
    for (int shard = 0; shard < 2; ++shard) {
        CorpusStream s = CorpusStream::from_file(path.string(), 7, shard, 2);
        for (size_t i = 0; i < s.size(); ++i) all.insert(*s.next());
    }
    REQUIRE(all == std::multiset<std::string>{"a", "b", "c", "d", "e"});
}

TEST_CASE("corpus: unreadable file throws") {
    REQUIRE_THROWS_AS(load_corpus_lines("/nonexistent/canine"), std::runtime_error);
}
