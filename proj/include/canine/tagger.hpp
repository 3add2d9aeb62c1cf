#pragma once

#include <algorithm>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "canine/adam.hpp"
#include "canine/model.hpp"

namespace canine {

// One sentence of character-aligned BIO labels.
struct TaggedSentence {
    std::vector<uint32_t> chars;
    std::vector<std::string> labels;
};

// File format: one "char<TAB>BIO-label" line per character, blank line between
// sentences.
inline std::vector<TaggedSentence> load_bio_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open tagging file: " + path);
    std::vector<TaggedSentence> sentences;
    TaggedSentence current;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            if (!current.chars.empty()) sentences.push_back(std::move(current));
            current = {};
            continue;
        }
        size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("tagging file line " + std::to_string(lineno) + ": missing tab");
        std::vector<uint32_t> cps = utf8_decode(line.substr(0, tab));
        if (cps.size() != 1)
            throw std::runtime_error("tagging file line " + std::to_string(lineno) +
                                     ": first field must be one character");
        current.chars.push_back(cps[0]);
        current.labels.push_back(line.substr(tab + 1));
    }
    if (!current.chars.empty()) sentences.push_back(std::move(current));
    return sentences;
}

inline void save_bio_file(const std::string& path, const std::vector<TaggedSentence>& sentences) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write tagging file: " + path);
    for (const auto& s : sentences) {
        for (size_t i = 0; i < s.chars.size(); ++i) {
            std::string c;
            utf8_append(c, s.chars[i]);
            out << c << "\t" << s.labels[i] << "\n";
        }
        out << "\n";
    }
}

// label ids with O fixed at 0
struct LabelSet {
    std::vector<std::string> names;

    static LabelSet from_sentences(const std::vector<TaggedSentence>& sentences) {
        std::set<std::string> uniq;
        for (const auto& s : sentences)
            for (const auto& l : s.labels) uniq.insert(l);
        LabelSet ls;
        ls.names.push_back("O");
        for (const auto& l : uniq)
            if (l != "O") ls.names.push_back(l);
        return ls;
    }

    int64_t size() const { return static_cast<int64_t>(names.size()); }

    int64_t id_of(const std::string& label) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == label) return static_cast<int64_t>(i);
        throw std::invalid_argument("unknown BIO label: " + label);
    }
};

// (type, start, end) spans from a BIO label sequence; an I- continues a span
// of the same type, otherwise it opens one (conlleval-style leniency)
inline std::vector<std::tuple<std::string, int64_t, int64_t>> bio_spans(
    const std::vector<std::string>& labels) {
    std::vector<std::tuple<std::string, int64_t, int64_t>> spans;
    std::string open_type;
    int64_t open_start = -1;
    auto close = [&](int64_t end) {
        if (open_start >= 0) spans.emplace_back(open_type, open_start, end);
        open_start = -1;
        open_type.clear();
    };
    for (int64_t i = 0; i < static_cast<int64_t>(labels.size()); ++i) {
        const std::string& l = labels[static_cast<size_t>(i)];
        if (l == "O" || l.size() < 2 || l[1] != '-') {
            close(i);
            continue;
        }
        std::string type = l.substr(2);
        if (l[0] == 'B' || open_start < 0 || type != open_type) {
            close(i);
            open_type = type;
            open_start = i;
        }
    }
    close(static_cast<int64_t>(labels.size()));
    return spans;
}

struct SpanF1 {
    int64_t gold = 0, predicted = 0, correct = 0;

    double precision() const { return predicted == 0 ? 0.0 : static_cast<double>(correct) / predicted; }
    double recall() const { return gold == 0 ? 0.0 : static_cast<double>(correct) / gold; }
    double f1() const {
        double p = precision(), r = recall();
        return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }

    void add(const std::vector<std::string>& gold_labels,
             const std::vector<std::string>& pred_labels) {
        auto g = bio_spans(gold_labels);
        auto p = bio_spans(pred_labels);
        gold += static_cast<int64_t>(g.size());
        predicted += static_cast<int64_t>(p.size());
        std::set<std::tuple<std::string, int64_t, int64_t>> gset(g.begin(), g.end());
        for (const auto& span : p)
            if (gset.count(span)) ++correct;
    }
};

struct FinetuneConfig {
    int64_t steps = 300;
    int64_t batch_size = 4;
    double lr = 1e-3;
    double warmup_frac = 0.025;
    uint64_t seed = 1;
    double clip_norm = 1.0;
};

// forward a sentence and predict a label per character position
inline std::vector<std::string> tag_sentence(Model& model, const LabelSet& labels,
                                             const TaggedSentence& sentence) {
    const ModelConfig& cfg = model.cfg;
    CodepointSequence seq = encode_text(utf8_encode(sentence.chars), cfg.enc.n, cfg.specials);
    Tape tape;
    ModelCtx ctx(tape, model.params, false);
    EncoderVars v = encode_vars(ctx, seq, cfg, nullptr, model.char_vocab_ptr());
    Var logits = linear(ctx, v.y_seq, "tagger/head", labels.size());
    std::vector<std::string> out;
    int64_t usable = std::min<int64_t>(static_cast<int64_t>(sentence.chars.size()), cfg.enc.n - 2);
    for (int64_t i = 0; i < usable; ++i) {
        int64_t pos = i + 1;  // skip CLS
        int64_t best = 0;
        for (int64_t c = 1; c < labels.size(); ++c)
            if (logits.val().at(pos, c) > logits.val().at(pos, best)) best = c;
        out.push_back(labels.names[static_cast<size_t>(best)]);
    }
    // truncated tail (if any) defaults to O
    out.resize(sentence.chars.size(), "O");
    return out;
}

inline SpanF1 evaluate_tagger(Model& model, const LabelSet& labels,
                              const std::vector<TaggedSentence>& sentences) {
    SpanF1 f1;
    for (const auto& s : sentences) {
        if (s.chars.size() != s.labels.size())
            throw std::invalid_argument("evaluate_tagger: label/char misalignment");
        f1.add(s.labels, tag_sentence(model, labels, s));
    }
    return f1;
}

// Linear head over full y_seq rows; pre-training heads take no part (and are
// stripped from the fine-tune checkpoint on save).
inline SpanF1 finetune_tagger(Model& model, const std::vector<TaggedSentence>& train_data,
                              const std::vector<TaggedSentence>& eval_data,
                              const LabelSet& labels, const FinetuneConfig& cfg) {
    if (train_data.empty()) throw std::invalid_argument("finetune_tagger: no training sentences");
    Adam adam(AdamConfig{.lr = cfg.lr, .clip_norm = cfg.clip_norm});
    Rng rng(cfg.seed);
    const ModelConfig& mc = model.cfg;

    for (int64_t step = 0; step < cfg.steps; ++step) {
        std::map<std::string, Tensor> grads;
        for (int64_t b = 0; b < cfg.batch_size; ++b) {
            const TaggedSentence& s =
                train_data[static_cast<size_t>(rng.below(train_data.size()))];
            if (s.chars.size() != s.labels.size())
                throw std::invalid_argument("finetune_tagger: label/char misalignment");
            CodepointSequence seq = encode_text(utf8_encode(s.chars), mc.enc.n, mc.specials);
            int64_t usable = std::min<int64_t>(static_cast<int64_t>(s.chars.size()), mc.enc.n - 2);
            if (usable == 0) continue;
            std::vector<int64_t> positions;
            std::vector<int64_t> targets;
            for (int64_t i = 0; i < usable; ++i) {
                positions.push_back(i + 1);
                targets.push_back(labels.id_of(s.labels[static_cast<size_t>(i)]));
            }
            Tape tape;
            ModelCtx ctx(tape, model.params, true);
            EncoderVars v = encode_vars(ctx, seq, mc, &positions, model.char_vocab_ptr());
            Var logits = linear(ctx, v.y_seq, "tagger/head", labels.size());
            Var loss = softmax_cross_entropy_mean(logits, targets);
            tape.backward(loss);
            for (auto& [name, g] : ctx.collect_grads()) {
                auto it = grads.find(name);
                if (it == grads.end())
                    grads.emplace(name, g);
                else
                    for (int64_t i = 0; i < g.numel(); ++i) it->second.at(i) += g.at(i);
            }
        }
        for (auto& [name, g] : grads)
            for (auto& v : g.data) v /= static_cast<double>(cfg.batch_size);
        adam.step(model.params, grads, lr_schedule(cfg.lr, step, cfg.steps, cfg.warmup_frac));
    }
    return evaluate_tagger(model, labels, eval_data);
}

}  // namespace canine
