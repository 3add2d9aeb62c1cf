#pragma once

#include <optional>

#include "canine/encoder.hpp"
#include "canine/param_store.hpp"
#include "canine/subword_vocab.hpp"

namespace canine {

enum class LossKind { canine_c, canine_s };

inline const char* loss_kind_name(LossKind k) {
    return k == LossKind::canine_c ? "canine-c" : "canine-s";
}

inline LossKind loss_kind_from(const std::string& s) {
    if (s == "canine-c") return LossKind::canine_c;
    if (s == "canine-s") return LossKind::canine_s;
    throw std::invalid_argument("unknown loss kind: " + s + " (expected canine-c or canine-s)");
}

// A checkpointable model: config, parameters, and the vocabularies that some
// configurations carry. The subword vocabulary exists only during pre-training
// and is dropped from fine-tune artifacts.
struct Model {
    ModelConfig cfg;
    ParamStore params;
    std::optional<CharVocab> char_vocab;
    std::optional<SubwordVocab> subword_vocab;
    std::vector<std::string> tagger_labels;  // present on fine-tuned taggers

    explicit Model(ModelConfig config, uint64_t param_seed = 0)
        : cfg(std::move(config)), params(param_seed) {
        cfg.validate();
    }

    Model() : params(0) {}

    const CharVocab* char_vocab_ptr() const { return char_vocab ? &*char_vocab : nullptr; }
};

}  // namespace canine
