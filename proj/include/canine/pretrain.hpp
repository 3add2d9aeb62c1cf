#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "canine/adam.hpp"
#include "canine/model.hpp"
#include "canine/unicode_io.hpp"

namespace canine {

struct TrainConfig {
    int64_t batch_size = 8;
    int64_t steps = 1000;
    double mask_fraction = 0.15;
    int64_t max_predictions_char = 320;
    int64_t max_predictions_subword = 80;
    double lr = 2e-3;
    double warmup_frac = 0.025;
    uint64_t seed = 0;
    int64_t log_every = 25;
    int64_t checkpoint_every = 0;  // 0: only at the end
    bool wall_clock_throughput = true;  // false writes 0 so metrics are byte-stable
    double clip_norm = 1.0;

    void validate() const {
        if (mask_fraction <= 0.0 || mask_fraction >= 1.0)
            throw std::invalid_argument("train: mask fraction must be in (0,1)");
        if (batch_size < 1 || steps < 1) throw std::invalid_argument("train: bad batch/steps");
    }
};

// ---------------------------------------------------------------------------
// CANINE-C: autoregressive character MLM over whitespace spans
// ---------------------------------------------------------------------------

struct MlmBatchC {
    CodepointSequence masked_input;
    std::vector<int64_t> gold_positions;     // strictly increasing
    std::vector<uint32_t> gold_chars;        // originals at gold_positions
    std::vector<int64_t> shuffle_perm;       // rank -> slot index
    std::vector<int64_t> bucketed_targets;   // gold mod B
};

// Masks whole whitespace-delimited spans, sampled uniformly without
// replacement, until mask_fraction of the non-special positions is covered or
// the prediction cap binds. Every covered character becomes the MASK codepoint;
// there is no random replacement in this loss.
inline std::optional<MlmBatchC> make_char_mlm_batch(const CodepointSequence& seq,
                                                    const SpecialCodepoints& sp,
                                                    const TrainConfig& cfg, int64_t buckets,
                                                    Rng& rng) {
    auto spans = whitespace_spans(seq, sp);
    if (spans.empty()) return std::nullopt;
    int64_t eligible = content_length(seq, sp);
    double budget = cfg.mask_fraction * static_cast<double>(eligible);

    std::vector<size_t> order(spans.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::vector<std::pair<int64_t, int64_t>> chosen;
    int64_t covered = 0;
    for (size_t i : order) {
        if (static_cast<double>(covered) >= budget) break;
        int64_t len = spans[i].second - spans[i].first;
        if (covered + len > cfg.max_predictions_char) continue;  // cap binds, try smaller spans
        chosen.push_back(spans[i]);
        covered += len;
    }
    if (chosen.empty()) return std::nullopt;
    std::sort(chosen.begin(), chosen.end());

    MlmBatchC batch;
    batch.masked_input = seq;
    for (auto [s, e] : chosen)
        for (int64_t i = s; i < e; ++i) {
            batch.gold_positions.push_back(i);
            batch.gold_chars.push_back(seq.at(i));
            batch.bucketed_targets.push_back(static_cast<int64_t>(seq.at(i) % buckets));
            batch.masked_input.cps[static_cast<size_t>(i)] = sp.mask;
        }
    batch.shuffle_perm.resize(batch.gold_positions.size());
    for (size_t i = 0; i < batch.shuffle_perm.size(); ++i)
        batch.shuffle_perm[i] = static_cast<int64_t>(i);
    rng.shuffle(batch.shuffle_perm);
    return batch;
}

// Gold characters feed the autoregressive layer through single-codepoint
// lookups only: n-gram context would couple neighbouring gold characters and
// leak later shuffled ranks into earlier predictions.
inline Var embed_gold_chars(ModelCtx& ctx, const std::vector<uint32_t>& chars,
                            const ModelConfig& cfg, const CharVocab* char_vocab) {
    CodepointSequence gold{chars};
    HashEmbedderConfig e = cfg.embed;
    e.d = cfg.enc.char_dim();
    switch (cfg.embedder) {
        case EmbedderKind::hash:
            return embed_codepoints(ctx, gold, e);
        case EmbedderKind::ngram: {
            HashEmbedderConfig uni = e;
            uni.ngram_N = 1;  // unigram slice of the same tables
            return embed_with_ngrams(ctx, gold, uni);
        }
        case EmbedderKind::char_vocab:
            if (!char_vocab) throw std::invalid_argument("embed_gold_chars: missing char vocab");
            return embed_char_vocab(ctx, gold, *char_vocab, e.d);
    }
    throw std::logic_error("embed_gold_chars: unreachable");
}

// [e_g ; y*_seq] -> feed-forward to d -> one causal-over-permutation layer ->
// bucket logits. The gold stream is shifted by one shuffled rank, so the query
// at rank i sees gold embeddings for ranks < i and its own y_seq feature.
inline Var autoregressive_char_head(ModelCtx& ctx, Var y_seq_star, Var gold_embeddings,
                                    const std::vector<int64_t>& shuffle_perm, int64_t buckets,
                                    const EncoderConfig& ec) {
    int64_t p = y_seq_star.val().dim(0);
    if (gold_embeddings.val().dim(0) != p)
        throw std::invalid_argument("char head: gold/yseq row counts differ");
    if (static_cast<int64_t>(shuffle_perm.size()) != p)
        throw std::invalid_argument("char head: permutation length mismatch");

    std::vector<int64_t> rank_of(static_cast<size_t>(p));
    AttentionSpec spec = AttentionSpec::causal(shuffle_perm);
    spec.validate(p, p);
    for (int64_t r = 0; r < p; ++r) rank_of[static_cast<size_t>(shuffle_perm[r])] = r;

    // slot s receives the gold character revealed one rank earlier
    std::vector<int64_t> prev_idx(static_cast<size_t>(p));
    std::vector<uint8_t> has_prev(static_cast<size_t>(p));
    for (int64_t s = 0; s < p; ++s) {
        int64_t r = rank_of[static_cast<size_t>(s)];
        prev_idx[static_cast<size_t>(s)] = r > 0 ? shuffle_perm[static_cast<size_t>(r - 1)] : 0;
        has_prev[static_cast<size_t>(s)] = r > 0;
    }
    Var shifted = mask_rows(gather_rows(gold_embeddings, prev_idx), has_prev);

    Var z = concat_cols(shifted, y_seq_star);
    Var h = gelu(linear(ctx, z, "pretrain/char_head/ff/in", ec.d));
    h = linear(ctx, h, "pretrain/char_head/ff/out", ec.d);
    h = transformer_layer(ctx, h, h, "pretrain/char_head/ar", spec, ec.head_count(), {}, ec.ln_eps);
    return linear(ctx, h, "pretrain/char_head/out", buckets);
}

// bucket logits at the masked positions, in gold-position order
inline Var logits_canine_c(ModelCtx& ctx, const MlmBatchC& batch, const ModelConfig& cfg,
                           const CharVocab* char_vocab = nullptr, bool use_targeted = true) {
    Var y_star;
    if (use_targeted) {
        EncoderVars v = encode_vars(ctx, batch.masked_input, cfg, &batch.gold_positions, char_vocab);
        y_star = v.y_seq;
    } else {
        EncoderVars v = encode_vars(ctx, batch.masked_input, cfg, nullptr, char_vocab);
        y_star = gather_rows(v.y_seq, batch.gold_positions);
    }
    Var e_g = embed_gold_chars(ctx, batch.gold_chars, cfg, char_vocab);
    return autoregressive_char_head(ctx, y_star, e_g, batch.shuffle_perm, cfg.embed.B, cfg.enc);
}

// mean cross-entropy of bucketed targets at the masked positions
inline Var loss_canine_c(ModelCtx& ctx, const MlmBatchC& batch, const ModelConfig& cfg,
                         const CharVocab* char_vocab = nullptr, bool use_targeted = true) {
    Var logits = logits_canine_c(ctx, batch, cfg, char_vocab, use_targeted);
    return softmax_cross_entropy_mean(logits, batch.bucketed_targets);
}

// ---------------------------------------------------------------------------
// CANINE-S: subword MLM with same-length random replacement
// ---------------------------------------------------------------------------

enum class SubwordAction : uint8_t { mask = 0, random_replace = 1, keep = 2 };

struct MlmBatchS {
    CodepointSequence masked_input;
    std::vector<int64_t> predict_positions;  // one char index per selected subword, increasing
    std::vector<int64_t> target_subword_ids;
    std::vector<SubwordAction> actions;      // aligned with predict_positions
};

// Selects mask_fraction of the in-vocabulary subwords; 80% become all-MASK
// spans, 10% are replaced by a uniformly drawn same-length vocabulary entry
// (character length is preserved exactly), 10% stay unmodified. One character
// position per span is chosen for the prediction.
inline std::optional<MlmBatchS> make_subword_mlm_batch(const CodepointSequence& seq,
                                                       const SubwordVocab& vocab,
                                                       const SpecialCodepoints& sp,
                                                       const TrainConfig& cfg, Rng& rng) {
    struct Candidate {
        int64_t start, length, vocab_id;
    };
    std::vector<Candidate> candidates;
    for (auto [s, e] : whitespace_spans(seq, sp)) {
        std::vector<uint32_t> word(seq.cps.begin() + s, seq.cps.begin() + e);
        for (const auto& tok : vocab.tokenize_word(word))
            if (tok.id >= 0) candidates.push_back({s + tok.offset, tok.length, tok.id});
    }
    if (candidates.empty()) return std::nullopt;

    auto want = static_cast<int64_t>(
        std::llround(cfg.mask_fraction * static_cast<double>(candidates.size())));
    want = std::clamp<int64_t>(want, 1, cfg.max_predictions_subword);

    std::vector<size_t> order(candidates.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    struct Selected {
        Candidate cand;
        SubwordAction action;
        int64_t predict_at;
    };
    std::vector<Selected> picked;
    for (size_t i = 0; i < order.size() && static_cast<int64_t>(picked.size()) < want; ++i) {
        const Candidate& c = candidates[order[i]];
        double roll = rng.next_double();
        SubwordAction action = roll < 0.8  ? SubwordAction::mask
                               : roll < 0.9 ? SubwordAction::random_replace
                                            : SubwordAction::keep;
        int64_t predict_at = c.start + static_cast<int64_t>(rng.below(static_cast<uint64_t>(c.length)));
        picked.push_back({c, action, predict_at});
    }
    std::sort(picked.begin(), picked.end(),
              [](const Selected& a, const Selected& b) { return a.predict_at < b.predict_at; });

    MlmBatchS batch;
    batch.masked_input = seq;
    for (const Selected& s : picked) {
        const Candidate& c = s.cand;
        switch (s.action) {
            case SubwordAction::mask:
                for (int64_t i = 0; i < c.length; ++i)
                    batch.masked_input.cps[static_cast<size_t>(c.start + i)] = sp.mask;
                break;
            case SubwordAction::random_replace: {
                const auto& pool = vocab.same_length_entries(c.length);
                if (pool.empty()) break;  // no same-length candidate: keep the original
                int64_t pick = pool[rng.below(pool.size())];
                const auto& repl = vocab.entry(pick);
                for (int64_t i = 0; i < c.length; ++i)
                    batch.masked_input.cps[static_cast<size_t>(c.start + i)] =
                        repl[static_cast<size_t>(i)];
                break;
            }
            case SubwordAction::keep:
                break;
        }
        batch.predict_positions.push_back(s.predict_at);
        batch.target_subword_ids.push_back(c.vocab_id);
        batch.actions.push_back(s.action);
    }
    return batch;
}

// subword-vocabulary logits at the selected positions; the head lives under
// pretrain/ and is excluded from fine-tune checkpoints
inline Var logits_canine_s(ModelCtx& ctx, const MlmBatchS& batch, const ModelConfig& cfg,
                           const SubwordVocab& vocab, const CharVocab* char_vocab = nullptr,
                           bool use_targeted = true) {
    Var y_star;
    if (use_targeted) {
        EncoderVars v =
            encode_vars(ctx, batch.masked_input, cfg, &batch.predict_positions, char_vocab);
        y_star = v.y_seq;
    } else {
        EncoderVars v = encode_vars(ctx, batch.masked_input, cfg, nullptr, char_vocab);
        y_star = gather_rows(v.y_seq, batch.predict_positions);
    }
    return linear(ctx, y_star, "pretrain/subword_head", vocab.size());
}

inline Var loss_canine_s(ModelCtx& ctx, const MlmBatchS& batch, const ModelConfig& cfg,
                         const SubwordVocab& vocab, const CharVocab* char_vocab = nullptr,
                         bool use_targeted = true) {
    Var logits = logits_canine_s(ctx, batch, cfg, vocab, char_vocab, use_targeted);
    return softmax_cross_entropy_mean(logits, batch.target_subword_ids);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct MetricsRecord {
    int64_t step;
    double loss;
    double lr;
    double chars_per_sec;
};

struct TrainResult {
    int64_t steps_done = 0;
    double final_loss = 0.0;
    int64_t skipped_records = 0;
};

struct TrainHalted : std::runtime_error {
    TrainHalted(const std::string& why, int64_t at_step)
        : std::runtime_error("training halted at step " + std::to_string(at_step) + ": " + why),
          step(at_step) {}
    int64_t step;
};

// Deterministic loop: batch -> targeted forward -> loss -> backward -> Adam.
// Metrics flow through the sink every log_every steps; checkpoint_cb fires on
// the configured cadence and once at the end (or on a non-finite halt, in
// which case the parameters are still the last good ones).
inline TrainResult train(Model& model, CorpusStream& data, LossKind loss_kind,
                         const TrainConfig& cfg,
                         const std::function<void(const MetricsRecord&)>& metrics_sink = {},
                         const std::function<void(int64_t)>& checkpoint_cb = {},
                         double stop_below_loss = -1.0) {
    cfg.validate();
    model.cfg.validate();
    if (loss_kind == LossKind::canine_s && !model.subword_vocab)
        throw std::invalid_argument("train: canine-s requires a subword vocabulary");
    if (data.empty()) throw std::invalid_argument("train: empty corpus");

    Adam adam(AdamConfig{.lr = cfg.lr, .clip_norm = cfg.clip_norm});
    Rng data_rng(cfg.seed ^ 0xDA7AC0DEULL);
    TrainResult result;
    auto t0 = std::chrono::steady_clock::now();
    int64_t chars_since_log = 0;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        double batch_loss = 0.0;
        std::map<std::string, Tensor> grads;
        int64_t attempts = 0;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            // draw records until one is maskable
            std::optional<std::string> record;
            for (;;) {
                record = data.next();
                if (!record) throw TrainHalted("corpus exhausted", step);
                if (++attempts > cfg.batch_size * 1000)
                    throw TrainHalted("no maskable records in corpus", step);
                CodepointSequence seq = encode_text(*record, model.cfg.enc.n, model.cfg.specials);
                Tape tape;
                ModelCtx ctx(tape, model.params, true);
                Rng dropout_rng(cfg.seed ^
                                (0x5EED5EEDULL + static_cast<uint64_t>(step) * 131 +
                                 static_cast<uint64_t>(b)));
                ctx.set_dropout(model.cfg.enc.dropout, &dropout_rng);
                Var loss;
                if (loss_kind == LossKind::canine_c) {
                    auto batch = make_char_mlm_batch(seq, model.cfg.specials, cfg,
                                                     model.cfg.embed.B, data_rng);
                    if (!batch) {
                        ++result.skipped_records;
                        continue;
                    }
                    loss = loss_canine_c(ctx, *batch, model.cfg, model.char_vocab_ptr());
                } else {
                    auto batch = make_subword_mlm_batch(seq, *model.subword_vocab,
                                                        model.cfg.specials, cfg, data_rng);
                    if (!batch) {
                        ++result.skipped_records;
                        continue;
                    }
                    loss = loss_canine_s(ctx, *batch, model.cfg, *model.subword_vocab,
                                         model.char_vocab_ptr());
                }
                double lv = loss.val().data[0];
                if (!std::isfinite(lv)) {
                    if (checkpoint_cb) checkpoint_cb(step);
                    throw TrainHalted("non-finite loss", step);
                }
                batch_loss += lv;
                chars_since_log += content_length(seq, model.cfg.specials);
                tape.backward(loss);
                for (auto& [name, g] : ctx.collect_grads()) {
                    auto it = grads.find(name);
                    if (it == grads.end())
                        grads.emplace(name, g);
                    else
                        for (int64_t i = 0; i < g.numel(); ++i) it->second.at(i) += g.at(i);
                }
                break;
            }
        }
        batch_loss /= static_cast<double>(cfg.batch_size);
        for (auto& [name, g] : grads)
            for (auto& v : g.data) v /= static_cast<double>(cfg.batch_size);

        double lr = lr_schedule(cfg.lr, step, cfg.steps, cfg.warmup_frac);
        try {
            adam.step(model.params, grads, lr);
        } catch (const NonFiniteGradient& e) {
            if (checkpoint_cb) checkpoint_cb(step);
            throw TrainHalted(e.what(), step);
        }

        result.steps_done = step + 1;
        result.final_loss = batch_loss;
        if (metrics_sink && ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps)) {
            double cps = 0.0;
            if (cfg.wall_clock_throughput) {
                auto t1 = std::chrono::steady_clock::now();
                double secs = std::chrono::duration<double>(t1 - t0).count();
                if (secs > 0) cps = static_cast<double>(chars_since_log) / secs;
                t0 = t1;
                chars_since_log = 0;
            }
            metrics_sink({step + 1, batch_loss, lr, cps});
        }
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && checkpoint_cb)
            checkpoint_cb(step + 1);
        if (stop_below_loss > 0 && batch_loss < stop_below_loss) break;
    }
    if (checkpoint_cb) checkpoint_cb(result.steps_done);
    return result;
}

}  // namespace canine
