#pragma once

#include <optional>
#include <string>
#include <vector>

#include "canine/hash_embed.hpp"
#include "canine/nn.hpp"
#include "canine/unicode_io.hpp"

namespace canine {

enum class EmbedderKind { hash, ngram, char_vocab };

inline const char* embedder_kind_name(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::hash:
            return "hash";
        case EmbedderKind::ngram:
            return "ngram";
        case EmbedderKind::char_vocab:
            return "char_vocab";
    }
    return "?";
}

inline EmbedderKind embedder_kind_from(const std::string& s) {
    if (s == "hash") return EmbedderKind::hash;
    if (s == "ngram") return EmbedderKind::ngram;
    if (s == "char_vocab") return EmbedderKind::char_vocab;
    throw std::invalid_argument("unknown embedder kind: " + s);
}

struct EncoderConfig {
    int64_t n = 2048;  // max character length
    int r = 4;         // downsample rate
    int64_t d = 768;   // model dim
    int64_t d_char = 0;  // input character dim; 0 means d
    int layers = 12;   // deep-stack depth
    int local_block = 128;
    int window = 4;    // upsampling conv window
    int heads = 0;     // 0 means d/64, minimum 1
    bool use_initial_transformer = true;
    bool attend_to_downsampled = false;
    bool residual_final_to_initial = false;
    bool residual_final_to_downsampled = false;
    bool concat_init_and_down = true;
    double dropout = 0.0;
    double ln_eps = 1e-12;

    int64_t m() const { return n / r; }
    int64_t char_dim() const { return d_char > 0 ? d_char : d; }
    int head_count() const {
        if (heads > 0) return heads;
        return d >= 64 ? static_cast<int>(d / 64) : 1;
    }
    int char_head_count() const {
        if (heads > 0) return heads;
        return char_dim() >= 64 ? static_cast<int>(char_dim() / 64) : 1;
    }

    void validate() const {
        if (n < 2) throw std::invalid_argument("encoder: n must be >= 2");
        if (r < 1) throw std::invalid_argument("encoder: r must be >= 1");
        if (n % r != 0) throw std::invalid_argument("encoder: r must divide n");
        if (layers < 0) throw std::invalid_argument("encoder: layers must be >= 0");
        if (local_block < 1) throw std::invalid_argument("encoder: local_block must be >= 1");
        if (window < 1) throw std::invalid_argument("encoder: window must be >= 1");
        if (d < 1) throw std::invalid_argument("encoder: d must be >= 1");
        if (d % head_count() != 0) throw std::invalid_argument("encoder: heads must divide d");
        if (char_dim() % char_head_count() != 0)
            throw std::invalid_argument("encoder: heads must divide d_char");
        if (residual_final_to_initial && char_dim() != d)
            throw std::invalid_argument("encoder: final-to-initial residual requires d_char == d");
    }
};

// Full model description: architecture, embedder and special codepoints.
struct ModelConfig {
    EncoderConfig enc;
    HashEmbedderConfig embed;
    EmbedderKind embedder = EmbedderKind::hash;
    SpecialCodepoints specials;

    void validate() const {
        enc.validate();
        specials.validate();
        if (embedder != EmbedderKind::char_vocab) {
            HashEmbedderConfig e = embed;
            e.d = enc.char_dim();
            e.validate();
        }
        if (embedder == EmbedderKind::ngram && embed.ngram_N < 2)
            throw std::invalid_argument("model: ngram embedder requires ngram_N >= 2");
    }
};

struct EncoderVars {
    Var e;             // [n, d_char] embeddings + positions
    Var h_init;        // [n, d_char]
    Var h_down;        // [m, d]
    Var h_down_prime;  // [m, d]
    Var h_up;          // [n, d]
    Var y_seq;         // [n, d] or [|p|, d] when targeted
    Var y_cls;         // [1, d]
    std::vector<uint8_t> char_valid;  // false at PAD positions
    std::vector<uint8_t> down_valid;  // false where a downsampled group is all PAD
};

struct EncoderOutputs {
    Tensor h_init;
    Tensor h_down_prime;
    Tensor y_seq;
    Tensor y_cls;
};

inline Var embed_input(ModelCtx& ctx, const CodepointSequence& seq, const ModelConfig& cfg,
                       const CharVocab* char_vocab) {
    HashEmbedderConfig e = cfg.embed;
    e.d = cfg.enc.char_dim();
    switch (cfg.embedder) {
        case EmbedderKind::hash:
            return embed_codepoints(ctx, seq, e);
        case EmbedderKind::ngram:
            return embed_with_ngrams(ctx, seq, e);
        case EmbedderKind::char_vocab:
            if (char_vocab == nullptr)
                throw std::invalid_argument("embed_input: char_vocab embedder needs a vocabulary");
            return embed_char_vocab(ctx, seq, *char_vocab, e.d);
    }
    throw std::logic_error("embed_input: unreachable");
}

// learned absolute positions, added before the initial transformer
inline Var add_positions(ModelCtx& ctx, Var e, const ModelConfig& cfg) {
    Var pos = ctx.param("embed/pos", {cfg.enc.n, cfg.enc.char_dim()}, Init::Normal002);
    if (e.val().dim(0) == cfg.enc.n) return add(e, pos);
    throw std::invalid_argument("add_positions: sequence length != configured n");
}

// h_init = LocalTransformer_1(e); h_down = StridedConv(h_init masked to zero at
// PAD, r). With use_initial_transformer=false, h_init = e.
inline void downsample(ModelCtx& ctx, EncoderVars& v, const ModelConfig& cfg) {
    const EncoderConfig& ec = cfg.enc;
    v.h_init = ec.use_initial_transformer
                   ? self_transformer_layer(ctx, v.e, "encoder/initial",
                                            AttentionSpec::local(ec.local_block),
                                            ec.char_head_count(), v.char_valid, ec.ln_eps)
                   : v.e;
    Var masked = mask_rows(v.h_init, v.char_valid);
    v.h_down = strided_conv1d(ctx, masked, "encoder/down_conv", ec.r, ec.r, ec.d);
}

// the deep stack: L standard full-attention layers over downsampled positions
inline Var encode_core(ModelCtx& ctx, Var h_down, const EncoderConfig& ec,
                       const std::vector<uint8_t>& down_valid) {
    Var h = h_down;
    for (int l = 0; l < ec.layers; ++l)
        h = self_transformer_layer(ctx, h, "encoder/core/layer" + std::to_string(l),
                                   AttentionSpec::full(), ec.head_count(), down_valid, ec.ln_eps);
    return h;
}

// replicate-r, concat with h_init, window-convolve back to d
inline Var upsample_features(ModelCtx& ctx, EncoderVars& v, const EncoderConfig& ec) {
    std::vector<int64_t> rep_idx(static_cast<size_t>(ec.n));
    for (int64_t i = 0; i < ec.n; ++i) rep_idx[static_cast<size_t>(i)] = i / ec.r;
    Var rep = gather_rows(v.h_down_prime, rep_idx);
    Var cat = ec.concat_init_and_down ? concat_cols(v.h_init, rep) : rep;
    Var masked = mask_rows(cat, v.char_valid);
    return window_conv_project(ctx, masked, "encoder/up_conv", ec.window, ec.d);
}

// Final transformer layer over h_up (optionally only at targeted positions, an
// equivalent gather because the layer has no inter-query dependencies), plus
// the ablation residual/attention variants.
inline Var upsample_output(ModelCtx& ctx, EncoderVars& v, const EncoderConfig& ec,
                           const std::vector<int64_t>* targeted) {
    Var y;
    if (targeted != nullptr) {
        Var q = gather_rows(v.h_up, *targeted);
        if (ec.attend_to_downsampled)
            y = transformer_layer(ctx, q, v.h_down_prime, "encoder/final", AttentionSpec::cross(),
                                  ec.head_count(), v.down_valid, ec.ln_eps);
        else
            y = transformer_layer(ctx, q, v.h_up, "encoder/final", AttentionSpec::cross(),
                                  ec.head_count(), v.char_valid, ec.ln_eps);
    } else {
        if (ec.attend_to_downsampled)
            y = transformer_layer(ctx, v.h_up, v.h_down_prime, "encoder/final",
                                  AttentionSpec::cross(), ec.head_count(), v.down_valid, ec.ln_eps);
        else
            y = self_transformer_layer(ctx, v.h_up, "encoder/final", AttentionSpec::full(),
                                       ec.head_count(), v.char_valid, ec.ln_eps);
    }
    if (ec.residual_final_to_initial) {
        Var h = targeted ? gather_rows(v.h_init, *targeted) : v.h_init;
        y = add(y, h);
    }
    if (ec.residual_final_to_downsampled) {
        std::vector<int64_t> rep_idx;
        if (targeted) {
            for (int64_t p : *targeted) rep_idx.push_back(p / ec.r);
        } else {
            for (int64_t i = 0; i < ec.n; ++i) rep_idx.push_back(i / ec.r);
        }
        y = add(y, gather_rows(v.h_down_prime, rep_idx));
    }
    return y;
}

// Full pipeline. targeted, when present, must be strictly increasing positions
// in [0, n); y_seq then holds rows only for those positions.
inline EncoderVars encode_vars(ModelCtx& ctx, const CodepointSequence& seq, const ModelConfig& cfg,
                               const std::vector<int64_t>* targeted = nullptr,
                               const CharVocab* char_vocab = nullptr) {
    cfg.validate();
    const EncoderConfig& ec = cfg.enc;
    if (seq.length() != ec.n)
        throw std::invalid_argument("encode: sequence length != configured n");
    if (targeted != nullptr) {
        if (targeted->empty()) throw std::invalid_argument("encode: empty targeted position list");
        int64_t prev = -1;
        for (int64_t p : *targeted) {
            if (p <= prev || p < 0 || p >= ec.n)
                throw std::invalid_argument(
                    "encode: targeted positions must be strictly increasing in [0, n)");
            prev = p;
        }
    }

    EncoderVars v;
    v.char_valid = pad_mask(seq, cfg.specials);
    v.down_valid.assign(static_cast<size_t>(ec.m()), 0);
    for (int64_t j = 0; j < ec.m(); ++j) {
        uint8_t any = 0;
        for (int64_t i = j * ec.r; i < (j + 1) * ec.r; ++i)
            any = any || v.char_valid[static_cast<size_t>(i)];
        v.down_valid[static_cast<size_t>(j)] = any;
    }

    v.e = add_positions(ctx, embed_input(ctx, seq, cfg, char_vocab), cfg);
    downsample(ctx, v, cfg);
    v.h_down_prime = encode_core(ctx, v.h_down, ec, v.down_valid);
    v.y_cls = row(v.h_down_prime, 0);
    v.h_up = upsample_features(ctx, v, ec);
    v.y_seq = upsample_output(ctx, v, ec, targeted);
    return v;
}

// forward-only convenience wrapper
inline EncoderOutputs encode(ParamStore& params, const CodepointSequence& seq,
                             const ModelConfig& cfg,
                             const std::vector<int64_t>* targeted = nullptr,
                             const CharVocab* char_vocab = nullptr) {
    Tape tape;
    ModelCtx ctx(tape, params, false);
    EncoderVars v = encode_vars(ctx, seq, cfg, targeted, char_vocab);
    EncoderOutputs out;
    out.h_init = v.h_init.val();
    out.h_down_prime = v.h_down_prime.val();
    out.y_seq = v.y_seq.val();
    out.y_cls = v.y_cls.val();
    return out;
}

}  // namespace canine
