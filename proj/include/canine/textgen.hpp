#pragma once

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include "canine/rng.hpp"
#include "canine/tagger.hpp"

namespace canine {

// Deterministic synthetic corpora for tests, smoke training and the bundled
// demo runs. Word-salad English with a Zipf-like rank distribution: trainable
// structure (stable spelling, frequent function words) without shipping data.

inline const std::vector<std::string>& english_word_list() {
    static const std::vector<std::string> words = {
        "the",      "of",       "and",      "a",        "to",       "in",       "is",
        "was",      "he",       "for",      "it",       "with",     "as",       "his",
        "on",       "be",       "at",       "by",       "had",      "not",      "are",
        "but",      "from",     "or",       "have",     "an",       "they",     "which",
        "one",      "you",      "were",     "her",      "all",      "she",      "there",
        "would",    "their",    "we",       "him",      "been",     "has",      "when",
        "who",      "will",     "more",     "no",       "if",       "out",      "so",
        "said",     "what",     "up",       "its",      "about",    "into",     "than",
        "them",     "can",      "only",     "other",    "new",      "some",     "could",
        "time",     "these",    "two",      "may",      "then",     "do",       "first",
        "any",      "my",       "now",      "such",     "like",     "our",      "over",
        "man",      "me",       "even",     "most",     "made",     "after",    "also",
        "did",      "many",     "before",   "must",     "through",  "years",    "where",
        "much",     "your",     "way",      "well",     "down",     "should",   "because",
        "each",     "just",     "those",    "people",   "how",      "too",      "little",
        "state",    "good",     "very",     "make",     "world",    "still",    "own",
        "see",      "men",      "work",     "long",     "get",      "here",     "between",
        "both",     "life",     "being",    "under",    "never",    "day",      "same",
        "another",  "know",     "while",    "last",     "might",    "us",       "great",
        "old",      "year",     "off",      "come",     "since",    "against",  "go",
        "came",     "right",    "used",     "take",     "three",    "house",    "water",
        "river",    "mountain", "forest",   "valley",   "village",  "city",     "road",
        "bridge",   "garden",   "window",   "winter",   "summer",   "morning",  "evening",
        "light",    "shadow",   "stone",    "silver",   "golden",   "quiet",    "sudden",
        "letter",   "journey",  "harbor",   "island",   "weather",  "thunder",  "gentle",
        "copper",   "lantern",  "meadow",   "orchard",  "raven",    "sparrow",  "willow",
        "harvest",  "candle",   "marble",   "velvet",   "whisper",  "autumn",   "spring",
        "distant",  "ancient",  "curious",  "fortune",  "library",  "observer", "pattern",
        "question", "remember", "stranger", "traveler", "umbrella", "various",  "wonder"};
    return words;
}

// one synthetic sentence of 4..11 Zipf-distributed words
inline std::string synthetic_sentence(Rng& rng) {
    const auto& words = english_word_list();
    int count = 4 + static_cast<int>(rng.below(8));
    std::string out;
    for (int w = 0; w < count; ++w) {
        // approximate Zipf over ranks by squaring a uniform draw
        double u = rng.next_double();
        auto rank = static_cast<size_t>(u * u * static_cast<double>(words.size()));
        if (rank >= words.size()) rank = words.size() - 1;
        if (w) out += ' ';
        out += words[rank];
    }
    return out;
}

// newline-delimited documents of 1..3 sentences until at least `bytes` bytes
inline void write_synthetic_corpus(const std::string& path, int64_t bytes, uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus: " + path);
    Rng rng(seed);
    int64_t written = 0;
    while (written < bytes) {
        std::string line = synthetic_sentence(rng);
        int extra = static_cast<int>(rng.below(3));
        for (int s = 0; s < extra; ++s) line += ". " + synthetic_sentence(rng);
        line += "\n";
        out << line;
        written += static_cast<int64_t>(line.size());
    }
}

// fixed memorization corpus used by the overfitting checks and demos
inline const std::vector<std::string>& eight_sentences() {
    static const std::vector<std::string> fixture = {
        "the quick brown fox jumps over the lazy dog",
        "pack my box with five dozen liquor jugs",
        "a gentle river winds through the silver valley",
        "morning light falls on the quiet village road",
        "the old lantern glows beside the garden gate",
        "sparrows gather seeds before the first winter storm",
        "a curious traveler follows the mountain path home",
        "soft thunder rolls across the distant autumn sky"};
    return fixture;
}

// Tagged sentences whose entities come from a closed set of Greek-script words
// inside Latin context words: linearly separable by script, which is the point
// of the unseen-script fine-tuning check.
inline std::vector<TaggedSentence> synthetic_tagged_corpus(int64_t sentences, uint64_t seed) {
    static const std::vector<std::string> entities = {"αλφα",  "βητα",  "γαμμα", "δελτα",
                                                      "κρονος", "ηλιος", "ατλας", "ορφευς"};
    const auto& words = english_word_list();
    Rng rng(seed);
    std::vector<TaggedSentence> out;
    for (int64_t s = 0; s < sentences; ++s) {
        TaggedSentence sent;
        int n_words = 3 + static_cast<int>(rng.below(5));
        int entity_at = static_cast<int>(rng.below(static_cast<uint64_t>(n_words)));
        for (int w = 0; w < n_words; ++w) {
            if (w) {
                sent.chars.push_back(' ');
                sent.labels.push_back("O");
            }
            if (w == entity_at) {
                const std::string& ent = entities[rng.below(entities.size())];
                std::vector<uint32_t> cps = utf8_decode(ent);
                for (size_t i = 0; i < cps.size(); ++i) {
                    sent.chars.push_back(cps[i]);
                    sent.labels.push_back(i == 0 ? "B-ENT" : "I-ENT");
                }
            } else {
                const std::string& word = words[rng.below(words.size())];
                for (char c : word) {
                    sent.chars.push_back(static_cast<uint32_t>(c));
                    sent.labels.push_back("O");
                }
            }
        }
        out.push_back(std::move(sent));
    }
    return out;
}

}  // namespace canine
