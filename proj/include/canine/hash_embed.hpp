#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "canine/nn.hpp"
#include "canine/unicode_io.hpp"

namespace canine {

constexpr uint64_t kDefaultHashSeed = 0xC0D0C1A55E5ULL;

// K pairwise-distinct odd 64-bit multipliers, derived from a seed so the same
// seed reproduces the same hashes on any platform.
struct HashFamily {
    std::vector<uint64_t> constants;

    static HashFamily from_seed(int k, uint64_t seed) {
        if (k < 1) throw std::invalid_argument("HashFamily: K must be >= 1");
        HashFamily f;
        uint64_t state = seed;
        while (static_cast<int>(f.constants.size()) < k) {
            uint64_t c = splitmix64_next(state) | 1ULL;
            bool dup = false;
            for (uint64_t prev : f.constants) dup = dup || prev == c;
            if (!dup) f.constants.push_back(c);
        }
        return f;
    }

    int k() const { return static_cast<int>(constants.size()); }

    // (x + 1) * c_k, wrapping mod 2^64; bucket reduction happens at lookup
    uint64_t raw(uint64_t x, int k) const { return (x + 1) * constants[static_cast<size_t>(k)]; }

    int64_t bucket(uint64_t x, int k, int64_t buckets) const {
        return static_cast<int64_t>(raw(x, k) % static_cast<uint64_t>(buckets));
    }
};

// Recursive n-gram hash: H'(x_i..x_j) = H(x_i + H'(x_{i+1}..x_j)), base H(x_i).
inline uint64_t ngram_raw_hash(const HashFamily& f, std::span<const uint32_t> slice, int k) {
    if (slice.empty()) throw std::invalid_argument("ngram_raw_hash: empty slice");
    uint64_t h = f.raw(slice.back(), k);
    for (size_t i = slice.size() - 1; i-- > 0;) h = f.raw(slice[i] + h, k);
    return h;
}

struct HashEmbedderConfig {
    int K = 8;
    int64_t B = 16384;
    int64_t d = 768;
    int ngram_N = 0;  // 0 disables the n-gram embedder
    int64_t ngram_B = 15000;
    uint64_t hash_seed = kDefaultHashSeed;

    int64_t d_slice() const { return d / K; }

    void validate() const {
        if (K < 1) throw std::invalid_argument("hash embedder: K must be >= 1");
        if (B < 1) throw std::invalid_argument("hash embedder: B must be >= 1");
        if (d < 1 || d % K != 0) throw std::invalid_argument("hash embedder: K must divide d");
        if (ngram_N != 0 && ngram_N < 2)
            throw std::invalid_argument("hash embedder: ngram_N must be 0 or >= 2");
        if (ngram_N != 0 && ngram_B < 1)
            throw std::invalid_argument("hash embedder: ngram_B must be >= 1");
    }
};

// e_i = concat_k E_k[H_k(x_i) mod B]; parameter count is K * B * (d/K) = B * d.
inline Var embed_codepoints(ModelCtx& ctx, const CodepointSequence& seq,
                            const HashEmbedderConfig& cfg) {
    cfg.validate();
    HashFamily fam = HashFamily::from_seed(cfg.K, cfg.hash_seed);
    int64_t n = seq.length();
    std::vector<Var> slices;
    slices.reserve(static_cast<size_t>(cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        Var table =
            ctx.param("embed/char/E_" + std::to_string(k), {cfg.B, cfg.d_slice()}, Init::Normal002);
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = fam.bucket(seq.at(i), k, cfg.B);
        slices.push_back(gather_rows(table, std::move(idx)));
    }
    return concat_cols(slices);
}

// e_i = concat_k sum_j E_{j,k}[H'_k(gram_j(i)) mod ngram_B], where gram_j(i) is
// the j-gram ending at position i, truncated at the sequence start. Order 1 is
// the codepoint itself, so this replaces embed_codepoints when enabled.
inline Var embed_with_ngrams(ModelCtx& ctx, const CodepointSequence& seq,
                             const HashEmbedderConfig& cfg) {
    // accepts any N >= 1 so that N=1 demonstrably reduces to embed_codepoints;
    // model-level configs require N >= 2 when the n-gram embedder is selected
    if (cfg.K < 1 || cfg.d < 1 || cfg.d % cfg.K != 0)
        throw std::invalid_argument("embed_with_ngrams: K must divide d");
    if (cfg.ngram_N < 1) throw std::invalid_argument("embed_with_ngrams: n-grams disabled");
    if (cfg.ngram_B < 1) throw std::invalid_argument("embed_with_ngrams: ngram_B must be >= 1");
    HashFamily fam = HashFamily::from_seed(cfg.K, cfg.hash_seed);
    int64_t n = seq.length();
    std::vector<Var> slices;
    slices.reserve(static_cast<size_t>(cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        Var acc;
        for (int order = 1; order <= cfg.ngram_N; ++order) {
            Var table = ctx.param("embed/ngram/E_" + std::to_string(order) + "_" + std::to_string(k),
                                  {cfg.ngram_B, cfg.d_slice()}, Init::Normal002);
            std::vector<int64_t> idx(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) {
                int64_t len = std::min<int64_t>(order, i + 1);
                std::span<const uint32_t> gram(seq.cps.data() + (i - len + 1),
                                               static_cast<size_t>(len));
                idx[static_cast<size_t>(i)] = static_cast<int64_t>(
                    ngram_raw_hash(fam, gram, k) % static_cast<uint64_t>(cfg.ngram_B));
            }
            Var term = gather_rows(table, std::move(idx));
            acc = acc.valid() ? add(acc, term) : term;
        }
        slices.push_back(acc);
    }
    return concat_cols(slices);
}

// Frequency-derived character vocabulary for the no-hashing ablation.
struct CharVocab {
    std::vector<uint32_t> codepoints;  // row i+1 of the table; row 0 is UNK
    std::unordered_map<uint32_t, int64_t> ids;

    int64_t table_rows() const { return static_cast<int64_t>(codepoints.size()) + 1; }

    int64_t id_of(uint32_t cp) const {
        auto it = ids.find(cp);
        return it == ids.end() ? 0 : it->second;
    }

    static CharVocab build(const std::vector<std::string>& corpus_lines, int64_t max_size) {
        std::map<uint32_t, int64_t> counts;
        for (const auto& line : corpus_lines)
            for (uint32_t cp : utf8_decode(line)) ++counts[cp];
        // sort by count desc, codepoint asc
        std::vector<std::pair<int64_t, uint32_t>> order;
        order.reserve(counts.size());
        for (const auto& [cp, c] : counts) order.emplace_back(-c, cp);
        std::sort(order.begin(), order.end());
        CharVocab v;
        for (const auto& [negc, cp] : order) {
            if (static_cast<int64_t>(v.codepoints.size()) >= max_size) break;
            v.ids.emplace(cp, static_cast<int64_t>(v.codepoints.size()) + 1);
            v.codepoints.push_back(cp);
        }
        return v;
    }

    // fraction of corpus codepoint occurrences covered by the vocabulary
    double coverage(const std::vector<std::string>& corpus_lines) const {
        int64_t total = 0, hit = 0;
        for (const auto& line : corpus_lines)
            for (uint32_t cp : utf8_decode(line)) {
                ++total;
                if (ids.count(cp)) ++hit;
            }
        return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
    }
};

// plain table lookup; out-of-vocabulary codepoints share the UNK row
inline Var embed_char_vocab(ModelCtx& ctx, const CodepointSequence& seq, const CharVocab& vocab,
                            int64_t d) {
    Var table = ctx.param("embed/charvocab/table", {vocab.table_rows(), d}, Init::Normal002);
    std::vector<int64_t> idx(static_cast<size_t>(seq.length()));
    for (int64_t i = 0; i < seq.length(); ++i) idx[static_cast<size_t>(i)] = vocab.id_of(seq.at(i));
    return gather_rows(table, std::move(idx));
}

}  // namespace canine
