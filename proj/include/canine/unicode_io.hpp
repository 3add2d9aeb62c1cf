#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "canine/rng.hpp"

namespace canine {

struct DecodeError : std::runtime_error {
    DecodeError(const std::string& what, size_t offset)
        : std::runtime_error(what + " at byte " + std::to_string(offset)), byte_offset(offset) {}
    size_t byte_offset;
};

constexpr uint32_t kMaxCodepoint = 0x10FFFF;

// Four distinct Private Use Area codepoints (U+E000..U+F8FF).
struct SpecialCodepoints {
    uint32_t cls = 0xE000;
    uint32_t sep = 0xE001;
    uint32_t mask = 0xE002;
    uint32_t pad = 0xE003;

    bool is_special(uint32_t cp) const { return cp == cls || cp == sep || cp == mask || cp == pad; }

    void validate() const {
        const uint32_t v[4] = {cls, sep, mask, pad};
        for (int i = 0; i < 4; ++i) {
            if (v[i] < 0xE000 || v[i] > 0xF8FF)
                throw std::invalid_argument("special codepoint outside the Private Use Area");
            for (int j = i + 1; j < 4; ++j)
                if (v[i] == v[j]) throw std::invalid_argument("special codepoints must be distinct");
        }
    }
};

// Strict UTF-8 decoding: rejects overlong forms, surrogates and out-of-range
// codepoints, reporting the byte offset of the failure.
inline std::vector<uint32_t> utf8_decode(std::string_view s) {
    std::vector<uint32_t> out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        uint8_t b0 = static_cast<uint8_t>(s[i]);
        uint32_t cp = 0;
        size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            throw DecodeError("invalid UTF-8 lead byte", i);
        }
        if (i + len > s.size()) throw DecodeError("truncated UTF-8 sequence", i);
        for (size_t k = 1; k < len; ++k) {
            uint8_t b = static_cast<uint8_t>(s[i + k]);
            if ((b & 0xC0) != 0x80) throw DecodeError("invalid UTF-8 continuation byte", i + k);
            cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr uint32_t kMinByLen[5] = {0, 0, 0x80, 0x800, 0x10000};
        if (len > 1 && cp < kMinByLen[len]) throw DecodeError("overlong UTF-8 encoding", i);
        if (cp >= 0xD800 && cp <= 0xDFFF) throw DecodeError("UTF-8 encoded surrogate", i);
        if (cp > kMaxCodepoint) throw DecodeError("codepoint out of range", i);
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void utf8_append(std::string& out, uint32_t cp) {
    if (cp <= 0x7F) {
        out.push_back(static_cast<char>(cp));
    } else if (cp <= 0x7FF) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp <= 0xFFFF) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string utf8_encode(const std::vector<uint32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (uint32_t cp : cps) utf8_append(out, cp);
    return out;
}

// Unicode White_Space property (Unicode 15 list).
inline bool is_unicode_whitespace(uint32_t cp) {
    switch (cp) {
        case 0x0009:
        case 0x000A:
        case 0x000B:
        case 0x000C:
        case 0x000D:
        case 0x0020:
        case 0x0085:
        case 0x00A0:
        case 0x1680:
        case 0x2000:
        case 0x2001:
        case 0x2002:
        case 0x2003:
        case 0x2004:
        case 0x2005:
        case 0x2006:
        case 0x2007:
        case 0x2008:
        case 0x2009:
        case 0x200A:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return false;
    }
}

// Fixed-length codepoint sequence: [CLS] text [SEP] PAD...; padding is always
// a contiguous suffix.
struct CodepointSequence {
    std::vector<uint32_t> cps;

    int64_t length() const { return static_cast<int64_t>(cps.size()); }
    uint32_t at(int64_t i) const { return cps[static_cast<size_t>(i)]; }
};

// [CLS] + codepoints + [SEP], truncated to max_len, PAD-filled to exactly max_len.
inline CodepointSequence encode_text(std::string_view text, int64_t max_len,
                                     const SpecialCodepoints& sp) {
    if (max_len < 2) throw std::invalid_argument("encode_text: max_len must be at least 2");
    std::vector<uint32_t> body = utf8_decode(text);
    if (static_cast<int64_t>(body.size()) > max_len - 2) body.resize(static_cast<size_t>(max_len - 2));
    CodepointSequence seq;
    seq.cps.reserve(static_cast<size_t>(max_len));
    seq.cps.push_back(sp.cls);
    seq.cps.insert(seq.cps.end(), body.begin(), body.end());
    seq.cps.push_back(sp.sep);
    seq.cps.resize(static_cast<size_t>(max_len), sp.pad);
    return seq;
}

// Inverse of encode_text for unpadded text: drops specials and padding.
inline std::string decode_text(const CodepointSequence& seq, const SpecialCodepoints& sp) {
    std::string out;
    for (uint32_t cp : seq.cps)
        if (!sp.is_special(cp)) utf8_append(out, cp);
    return out;
}

// per-position validity: false at PAD
inline std::vector<uint8_t> pad_mask(const CodepointSequence& seq, const SpecialCodepoints& sp) {
    std::vector<uint8_t> keep(seq.cps.size());
    for (size_t i = 0; i < seq.cps.size(); ++i) keep[i] = seq.cps[i] != sp.pad ? 1 : 0;
    return keep;
}

// count of positions that are neither special nor PAD
inline int64_t content_length(const CodepointSequence& seq, const SpecialCodepoints& sp) {
    int64_t n = 0;
    for (uint32_t cp : seq.cps)
        if (!sp.is_special(cp)) ++n;
    return n;
}

// Maximal runs of non-whitespace, non-special codepoints as half-open spans.
inline std::vector<std::pair<int64_t, int64_t>> whitespace_spans(const CodepointSequence& seq,
                                                                 const SpecialCodepoints& sp) {
    std::vector<std::pair<int64_t, int64_t>> spans;
    int64_t n = seq.length();
    int64_t start = -1;
    for (int64_t i = 0; i < n; ++i) {
        uint32_t cp = seq.at(i);
        bool breaker = sp.is_special(cp) || is_unicode_whitespace(cp);
        if (breaker) {
            if (start >= 0) {
                spans.emplace_back(start, i);
                start = -1;
            }
        } else if (start < 0) {
            start = i;
        }
    }
    if (start >= 0) spans.emplace_back(start, n);
    return spans;
}

// Loads newline-delimited UTF-8 documents; invalid lines are skipped and counted.
inline std::vector<std::string> load_corpus_lines(const std::string& path, size_t* skipped = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<std::string> lines;
    std::string line;
    size_t bad = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            utf8_decode(line);
            lines.push_back(line);
        } catch (const DecodeError&) {
            ++bad;
        }
    }
    if (skipped) *skipped = bad;
    return lines;
}

// Deterministic shuffled stream over corpus lines with optional sharding and
// multi-epoch repeat. Sharding partitions by original line index, so the
// disjoint union of all shards is the whole file.
class CorpusStream {
public:
    CorpusStream(std::vector<std::string> lines, uint64_t seed, int shard_index = 0,
                 int shard_count = 1)
        : seed_(seed) {
        if (shard_count < 1 || shard_index < 0 || shard_index >= shard_count)
            throw std::invalid_argument("CorpusStream: bad shard spec");
        for (size_t i = 0; i < lines.size(); ++i)
            if (static_cast<int>(i % static_cast<size_t>(shard_count)) == shard_index)
                lines_.push_back(std::move(lines[i]));
        reshuffle();
    }

    static CorpusStream from_file(const std::string& path, uint64_t seed, int shard_index = 0,
                                  int shard_count = 1, size_t* skipped = nullptr) {
        return CorpusStream(load_corpus_lines(path, skipped), seed, shard_index, shard_count);
    }

    size_t size() const { return lines_.size(); }
    int64_t epoch() const { return epoch_; }
    bool empty() const { return lines_.empty(); }

    // next record, re-shuffling at each epoch boundary; nullopt iff the corpus is empty
    std::optional<std::string> next() {
        if (lines_.empty()) return std::nullopt;
        if (cursor_ >= order_.size()) {
            ++epoch_;
            reshuffle();
        }
        return lines_[order_[cursor_++]];
    }

private:
    void reshuffle() {
        order_.resize(lines_.size());
        for (size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        Rng rng(seed_ ^ (0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(epoch_ + 1)));
        rng.shuffle(order_);
        cursor_ = 0;
    }

    std::vector<std::string> lines_;
    std::vector<size_t> order_;
    size_t cursor_ = 0;
    int64_t epoch_ = 0;
    uint64_t seed_;
};

}  // namespace canine
