#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canine/unicode_io.hpp"

namespace canine {

// Frequency-derived subword vocabulary: all single codepoints seen in the
// corpus plus greedy most-frequent-pair merges, with a length index for
// same-length random replacement. Deterministic given (corpus, size).
class SubwordVocab {
public:
    struct Merge {
        int64_t left, right, merged;
    };

    static SubwordVocab build(const std::vector<std::string>& corpus_lines, int64_t target_size) {
        // count whitespace-delimited words
        std::map<std::vector<uint32_t>, int64_t> word_counts;
        for (const auto& line : corpus_lines) {
            std::vector<uint32_t> cps = utf8_decode(line);
            std::vector<uint32_t> word;
            for (uint32_t cp : cps) {
                if (is_unicode_whitespace(cp)) {
                    if (!word.empty()) ++word_counts[word];
                    word.clear();
                } else {
                    word.push_back(cp);
                }
            }
            if (!word.empty()) ++word_counts[word];
        }
        if (word_counts.empty()) throw std::invalid_argument("SubwordVocab: empty corpus");

        SubwordVocab v;
        // alphabet first, sorted by codepoint
        std::map<uint32_t, int64_t> char_freq;
        for (const auto& [word, count] : word_counts)
            for (uint32_t cp : word) char_freq[cp] += count;
        if (target_size < static_cast<int64_t>(char_freq.size()))
            throw std::invalid_argument("SubwordVocab: size smaller than the corpus alphabet");
        for (const auto& [cp, freq] : char_freq) v.push_entry({cp}, freq);

        // words as entry-id sequences
        std::vector<std::vector<int64_t>> tokens;
        std::vector<int64_t> counts;
        for (const auto& [word, count] : word_counts) {
            std::vector<int64_t> ids;
            for (uint32_t cp : word) ids.push_back(v.ids_.at({cp}));
            tokens.push_back(std::move(ids));
            counts.push_back(count);
        }

        while (static_cast<int64_t>(v.entries_.size()) < target_size) {
            // most frequent adjacent pair; ties break on the smaller entry strings
            std::map<std::pair<int64_t, int64_t>, int64_t> pair_counts;
            for (size_t w = 0; w < tokens.size(); ++w)
                for (size_t i = 0; i + 1 < tokens[w].size(); ++i)
                    pair_counts[{tokens[w][i], tokens[w][i + 1]}] += counts[w];
            std::pair<int64_t, int64_t> best{-1, -1};
            int64_t best_count = 1;  // merges of frequency 1 add nothing
            for (const auto& [pair, count] : pair_counts) {
                if (count > best_count ||
                    (count == best_count && best.first >= 0 && pair_key(v, pair) < pair_key(v, best))) {
                    best = pair;
                    best_count = count;
                }
            }
            if (best.first < 0) break;

            std::vector<uint32_t> merged = v.entries_[static_cast<size_t>(best.first)];
            const auto& right = v.entries_[static_cast<size_t>(best.second)];
            merged.insert(merged.end(), right.begin(), right.end());
            int64_t merged_id = v.push_entry(merged, best_count);
            v.merges_.push_back({best.first, best.second, merged_id});

            for (auto& ids : tokens) {
                for (size_t i = 0; i + 1 < ids.size();) {
                    if (ids[i] == best.first && ids[i + 1] == best.second) {
                        ids[i] = merged_id;
                        ids.erase(ids.begin() + static_cast<int64_t>(i) + 1);
                    } else {
                        ++i;
                    }
                }
            }
        }
        return v;
    }

    int64_t size() const { return static_cast<int64_t>(entries_.size()); }
    const std::vector<uint32_t>& entry(int64_t id) const { return entries_[static_cast<size_t>(id)]; }
    int64_t frequency(int64_t id) const { return freqs_[static_cast<size_t>(id)]; }
    const std::vector<Merge>& merges() const { return merges_; }

    int64_t id_of(const std::vector<uint32_t>& cps) const {
        auto it = ids_.find(cps);
        return it == ids_.end() ? -1 : it->second;
    }

    const std::vector<int64_t>& same_length_entries(int64_t length) const {
        static const std::vector<int64_t> empty;
        auto it = by_length_.find(length);
        return it == by_length_.end() ? empty : it->second;
    }

    // one token per subword: (char offset within the word, char length, vocab id);
    // codepoints outside the alphabet become id -1 singletons
    struct Token {
        int64_t offset, length, id;
    };

    std::vector<Token> tokenize_word(const std::vector<uint32_t>& word) const {
        std::vector<int64_t> ids;
        ids.reserve(word.size());
        for (uint32_t cp : word) ids.push_back(id_of({cp}));
        // apply merges in creation order; unknown (-1) never merges
        for (const Merge& m : merges_) {
            for (size_t i = 0; i + 1 < ids.size();) {
                if (ids[i] == m.left && ids[i + 1] == m.right) {
                    ids[i] = m.merged;
                    ids.erase(ids.begin() + static_cast<int64_t>(i) + 1);
                } else {
                    ++i;
                }
            }
        }
        std::vector<Token> tokens;
        int64_t off = 0;
        for (int64_t id : ids) {
            int64_t len = id >= 0 ? static_cast<int64_t>(entries_[static_cast<size_t>(id)].size()) : 1;
            tokens.push_back({off, len, id});
            off += len;
        }
        return tokens;
    }

    std::string to_text() const {
        std::string out = "canine-subword-vocab v1\n";
        out += "entries " + std::to_string(entries_.size()) + "\n";
        for (size_t i = 0; i < entries_.size(); ++i)
            out += utf8_encode(entries_[i]) + "\t" + std::to_string(freqs_[i]) + "\n";
        out += "merges " + std::to_string(merges_.size()) + "\n";
        for (const Merge& m : merges_)
            out += std::to_string(m.left) + " " + std::to_string(m.right) + " " +
                   std::to_string(m.merged) + "\n";
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write vocab file: " + path);
        out << to_text();
        if (!out) throw std::runtime_error("failed writing vocab file: " + path);
    }

    static SubwordVocab parse(std::istream& in, const std::string& origin) {
        std::string line;
        if (!std::getline(in, line) || line != "canine-subword-vocab v1")
            throw std::runtime_error("bad vocab header: " + origin);
        size_t n_entries = 0, n_merges = 0;
        std::string tag;
        in >> tag >> n_entries;
        if (tag != "entries") throw std::runtime_error("bad vocab file: " + origin);
        std::getline(in, line);
        SubwordVocab v;
        for (size_t i = 0; i < n_entries; ++i) {
            if (!std::getline(in, line)) throw std::runtime_error("truncated vocab file: " + origin);
            size_t tab = line.rfind('\t');
            if (tab == std::string::npos) throw std::runtime_error("bad vocab entry: " + line);
            v.push_entry(utf8_decode(line.substr(0, tab)), std::stoll(line.substr(tab + 1)));
        }
        in >> tag >> n_merges;
        if (tag != "merges") throw std::runtime_error("bad vocab file: " + origin);
        for (size_t i = 0; i < n_merges; ++i) {
            Merge m{};
            in >> m.left >> m.right >> m.merged;
            v.merges_.push_back(m);
        }
        if (!in) throw std::runtime_error("truncated vocab file: " + origin);
        return v;
    }

    static SubwordVocab load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open vocab file: " + path);
        return parse(in, path);
    }

private:
    static std::pair<std::vector<uint32_t>, std::vector<uint32_t>> pair_key(
        const SubwordVocab& v, const std::pair<int64_t, int64_t>& p) {
        return {v.entries_[static_cast<size_t>(p.first)], v.entries_[static_cast<size_t>(p.second)]};
    }

    int64_t push_entry(std::vector<uint32_t> cps, int64_t freq) {
        if (cps.empty()) throw std::invalid_argument("SubwordVocab: empty entry");
        int64_t id = static_cast<int64_t>(entries_.size());
        ids_.emplace(cps, id);
        by_length_[static_cast<int64_t>(cps.size())].push_back(id);
        entries_.push_back(std::move(cps));
        freqs_.push_back(freq);
        return id;
    }

    std::vector<std::vector<uint32_t>> entries_;
    std::vector<int64_t> freqs_;
    std::map<std::vector<uint32_t>, int64_t> ids_;
    std::map<int64_t, std::vector<int64_t>> by_length_;
    std::vector<Merge> merges_;
};

}  // namespace canine
