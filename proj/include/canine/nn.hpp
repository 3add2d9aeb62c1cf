#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canine/param_store.hpp"
#include "canine/tape.hpp"

namespace canine {

// Attention wiring. causal_over_permutation lets the query at shuffled rank i
// see keys at shuffled ranks <= i; permutation[rank] = slot index.
struct AttentionSpec {
    enum class Mode { full_self, blockwise_local, cross, causal_over_permutation };

    Mode mode = Mode::full_self;
    int block_size = 0;
    std::vector<int64_t> permutation;

    static AttentionSpec full() { return {Mode::full_self, 0, {}}; }
    static AttentionSpec local(int block) { return {Mode::blockwise_local, block, {}}; }
    static AttentionSpec cross() { return {Mode::cross, 0, {}}; }
    static AttentionSpec causal(std::vector<int64_t> perm) {
        return {Mode::causal_over_permutation, 0, std::move(perm)};
    }

    void validate(int64_t nq, int64_t nk) const {
        switch (mode) {
            case Mode::full_self:
                if (nq != nk) throw std::invalid_argument("attention: full_self requires nq == nk");
                break;
            case Mode::blockwise_local:
                if (nq != nk) throw std::invalid_argument("attention: local requires nq == nk");
                if (block_size <= 0) throw std::invalid_argument("attention: block_size must be positive");
                break;
            case Mode::cross:
                break;
            case Mode::causal_over_permutation: {
                if (nq != nk)
                    throw std::invalid_argument("attention: causal_over_permutation requires nq == nk");
                if (static_cast<int64_t>(permutation.size()) != nq)
                    throw std::invalid_argument("attention: permutation length must equal nq");
                std::vector<uint8_t> seen(static_cast<size_t>(nq), 0);
                for (int64_t p : permutation) {
                    if (p < 0 || p >= nq || seen[static_cast<size_t>(p)])
                        throw std::invalid_argument("attention: permutation is not a bijection");
                    seen[static_cast<size_t>(p)] = 1;
                }
                break;
            }
        }
    }
};

// key_valid may be empty (all keys visible)
inline AttnMask build_attn_mask(const AttentionSpec& spec, int64_t nq, int64_t nk,
                                const std::vector<uint8_t>& key_valid) {
    spec.validate(nq, nk);
    if (!key_valid.empty() && static_cast<int64_t>(key_valid.size()) != nk)
        throw std::invalid_argument("attention: key_valid length mismatch");
    AttnMask mask(nq, nk);
    auto kv = [&](int64_t j) { return key_valid.empty() || key_valid[static_cast<size_t>(j)]; };
    switch (spec.mode) {
        case AttentionSpec::Mode::full_self:
        case AttentionSpec::Mode::cross:
            for (int64_t i = 0; i < nq; ++i)
                for (int64_t j = 0; j < nk; ++j) mask.at(i, j) = kv(j) ? 1 : 0;
            break;
        case AttentionSpec::Mode::blockwise_local:
            for (int64_t i = 0; i < nq; ++i) {
                int64_t b0 = (i / spec.block_size) * spec.block_size;
                int64_t b1 = std::min<int64_t>(b0 + spec.block_size, nk);
                for (int64_t j = 0; j < nk; ++j)
                    mask.at(i, j) = (j >= b0 && j < b1 && kv(j)) ? 1 : 0;
            }
            break;
        case AttentionSpec::Mode::causal_over_permutation: {
            std::vector<int64_t> rank_of(static_cast<size_t>(nq));
            for (int64_t r = 0; r < nq; ++r) rank_of[static_cast<size_t>(spec.permutation[r])] = r;
            for (int64_t i = 0; i < nq; ++i)
                for (int64_t j = 0; j < nk; ++j)
                    mask.at(i, j) =
                        (rank_of[static_cast<size_t>(j)] <= rank_of[static_cast<size_t>(i)] && kv(j)) ? 1
                                                                                                      : 0;
            break;
        }
    }
    return mask;
}

// Ties a tape to a parameter store during one forward/backward pass. Parameters
// enter the graph once each; gradients are read back by name after backward().
class ModelCtx {
public:
    ModelCtx(Tape& tape, ParamStore& store, bool train_mode = true)
        : tape_(&tape), store_(&store), train_(train_mode) {}

    Tape& tape() { return *tape_; }
    ParamStore& store() { return *store_; }
    bool training() const { return train_; }

    void set_dropout(double p, Rng* rng) {
        dropout_p_ = p;
        dropout_rng_ = rng;
    }

    Var param(const std::string& name, const std::vector<int64_t>& shape, Init init) {
        auto it = param_nodes_.find(name);
        if (it != param_nodes_.end()) return it->second;
        Tensor& t = store_->get_or_create(name, shape, init);
        Var v = tape_->leaf(t, train_);
        param_nodes_.emplace(name, v);
        return v;
    }

    Var constant(Tensor t) { return tape_->leaf(std::move(t), false); }

    Var maybe_dropout(Var x) {
        if (!train_ || dropout_p_ <= 0.0 || dropout_rng_ == nullptr) return x;
        return dropout(x, dropout_p_, *dropout_rng_);
    }

    // gradients accumulated on this tape, keyed by parameter name
    std::map<std::string, Tensor> collect_grads() const {
        std::map<std::string, Tensor> out;
        for (const auto& [name, var] : param_nodes_)
            if (var.requires_grad()) out.emplace(name, var.grad());
        return out;
    }

    const std::map<std::string, Var>& param_nodes() const { return param_nodes_; }

private:
    Tape* tape_;
    ParamStore* store_;
    bool train_;
    double dropout_p_ = 0.0;
    Rng* dropout_rng_ = nullptr;
    std::map<std::string, Var> param_nodes_;
};

// y = x W + b with W: [in, out], b: [out]
inline Var linear(ModelCtx& ctx, Var x, const std::string& name, int64_t out_dim) {
    int64_t in_dim = x.val().dim(1);
    Var w = ctx.param(name + "/w", {in_dim, out_dim}, Init::Normal002);
    Var b = ctx.param(name + "/b", {out_dim}, Init::Zeros);
    return add_bias(matmul(x, w), b);
}

inline Var layer_norm_layer(ModelCtx& ctx, Var x, const std::string& name, double eps) {
    int64_t d = x.val().dim(1);
    Var g = ctx.param(name + "/gamma", {d}, Init::Ones);
    Var b = ctx.param(name + "/beta", {d}, Init::Zeros);
    return layer_norm(x, g, b, eps);
}

// Multi-head attention with q/k/v/output projections. kv_in may equal q_in.
inline Var attention(ModelCtx& ctx, Var q_in, Var kv_in, const std::string& name,
                     const AttentionSpec& spec, int heads, const std::vector<uint8_t>& key_valid) {
    int64_t d = q_in.val().dim(1);
    if (kv_in.val().dim(1) != d) throw std::invalid_argument("attention: q/kv model dims differ");
    Var q = linear(ctx, q_in, name + "/q", d);
    Var k = linear(ctx, kv_in, name + "/k", d);
    Var v = linear(ctx, kv_in, name + "/v", d);
    AttnMask mask = build_attn_mask(spec, q_in.val().dim(0), kv_in.val().dim(0), key_valid);
    Var o = mha_core(q, k, v, heads, mask);
    return linear(ctx, o, name + "/o", d);
}

// position-wise FFN: GELU between two linear maps; hidden = mult * d
inline Var feed_forward(ModelCtx& ctx, Var x, const std::string& name, int mult = 4) {
    int64_t d = x.val().dim(1);
    Var h = gelu(linear(ctx, x, name + "/in", d * mult));
    h = ctx.maybe_dropout(h);
    return linear(ctx, h, name + "/out", d);
}

// Post-norm transformer layer (attention + FFN, each followed by add & norm).
// kv: same tensor for self modes, distinct for cross mode.
inline Var transformer_layer(ModelCtx& ctx, Var x, Var kv, const std::string& name,
                             const AttentionSpec& spec, int heads,
                             const std::vector<uint8_t>& key_valid, double ln_eps) {
    Var a = attention(ctx, x, kv, name + "/attn", spec, heads, key_valid);
    a = ctx.maybe_dropout(a);
    Var h = layer_norm_layer(ctx, add(x, a), name + "/ln1", ln_eps);
    Var f = feed_forward(ctx, h, name + "/ff");
    f = ctx.maybe_dropout(f);
    return layer_norm_layer(ctx, add(h, f), name + "/ln2", ln_eps);
}

inline Var self_transformer_layer(ModelCtx& ctx, Var x, const std::string& name,
                                  const AttentionSpec& spec, int heads,
                                  const std::vector<uint8_t>& key_valid, double ln_eps) {
    return transformer_layer(ctx, x, x, name, spec, heads, key_valid, ln_eps);
}

// stride-r temporal convolution; kernel width defaults to the stride
inline Var strided_conv1d(ModelCtx& ctx, Var x, const std::string& name, int stride, int kernel,
                          int64_t out_dim) {
    int64_t din = x.val().dim(1);
    Var w = ctx.param(name + "/w", {static_cast<int64_t>(kernel) * din, out_dim}, Init::Normal002);
    Var b = ctx.param(name + "/b", {out_dim}, Init::Zeros);
    return conv1d(x, w, b, kernel, stride);
}

// stride-1 convolution over a window, projecting concatenated features down
inline Var window_conv_project(ModelCtx& ctx, Var x, const std::string& name, int window,
                               int64_t out_dim) {
    return strided_conv1d(ctx, x, name, 1, window, out_dim);
}

}  // namespace canine
