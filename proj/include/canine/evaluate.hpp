#pragma once

#include <string>
#include <vector>

#include "canine/pretrain.hpp"

namespace canine {

// Held-out masked-prediction quality with a deterministic masking seed.
struct EvalReport {
    int64_t records = 0;
    int64_t skipped = 0;
    int64_t positions = 0;
    int64_t correct = 0;
    double loss_sum = 0.0;

    double mean_loss() const { return records == 0 ? 0.0 : loss_sum / static_cast<double>(records); }
    double accuracy() const {
        return positions == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(positions);
    }
};

inline EvalReport evaluate_masked(Model& model, const std::vector<std::string>& lines,
                                  LossKind kind, const TrainConfig& cfg, uint64_t seed,
                                  int64_t max_records = -1) {
    if (kind == LossKind::canine_s && !model.subword_vocab)
        throw std::invalid_argument("evaluate: canine-s requires a subword vocabulary");
    EvalReport report;
    for (size_t idx = 0; idx < lines.size(); ++idx) {
        if (max_records >= 0 && report.records >= max_records) break;
        CodepointSequence seq = encode_text(lines[idx], model.cfg.enc.n, model.cfg.specials);
        Rng rng(seed ^ (0xE7A1BA5EULL + idx));
        Tape tape;
        ModelCtx ctx(tape, model.params, false);
        Var logits;
        std::vector<int64_t> targets;
        if (kind == LossKind::canine_c) {
            auto batch = make_char_mlm_batch(seq, model.cfg.specials, cfg, model.cfg.embed.B, rng);
            if (!batch) {
                ++report.skipped;
                continue;
            }
            logits = logits_canine_c(ctx, *batch, model.cfg, model.char_vocab_ptr());
            targets = batch->bucketed_targets;
        } else {
            auto batch =
                make_subword_mlm_batch(seq, *model.subword_vocab, model.cfg.specials, cfg, rng);
            if (!batch) {
                ++report.skipped;
                continue;
            }
            logits = logits_canine_s(ctx, *batch, model.cfg, *model.subword_vocab,
                                     model.char_vocab_ptr());
            targets = batch->target_subword_ids;
        }
        report.loss_sum += softmax_cross_entropy_mean(logits, targets).val().data[0];
        const Tensor& l = logits.val();
        for (size_t i = 0; i < targets.size(); ++i) {
            int64_t best = 0;
            for (int64_t c = 1; c < l.dim(1); ++c)
                if (l.at(static_cast<int64_t>(i), c) > l.at(static_cast<int64_t>(i), best)) best = c;
            if (best == targets[i]) ++report.correct;
            ++report.positions;
        }
        ++report.records;
    }
    return report;
}

}  // namespace canine
