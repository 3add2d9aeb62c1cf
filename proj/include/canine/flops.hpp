#pragma once

#include <cstdint>

#include "canine/encoder.hpp"

namespace canine {

// Analytic forward-pass FLOP counts (2 FLOPs per multiply-add; softmax and
// normalization terms are negligible next to the matmuls and are ignored).
// m is computed as ceil(n/r) so rates that do not divide n can still be
// compared, mirroring the published downsample-rate ablations.
struct FlopsBreakdown {
    double embed = 0;
    double initial_local = 0;   // single block-wise local layer
    double down_conv = 0;
    double core_attention = 0;  // the quadratic score + value terms only
    double core_other = 0;      // projections and feed-forward of the deep stack
    double up_conv = 0;
    double final_layer = 0;

    double core_total() const { return core_attention + core_other; }
    double total() const {
        return embed + initial_local + down_conv + core_attention + core_other + up_conv +
               final_layer;
    }
};

namespace detail {

// one post-norm transformer layer at sequence length s, width d
inline double layer_proj_ff_flops(double s, double d) {
    return 8.0 * s * d * d /*qkvo*/ + 16.0 * s * d * d /*ffn 4d*/;
}

inline double attn_score_flops(double nq, double nk, double d) { return 4.0 * nq * nk * d; }

}  // namespace detail

inline FlopsBreakdown canine_flops(const EncoderConfig& cfg, int64_t targeted_positions = 0) {
    FlopsBreakdown f;
    double n = static_cast<double>(cfg.n);
    double m = static_cast<double>((cfg.n + cfg.r - 1) / cfg.r);
    double d = static_cast<double>(cfg.d);
    double dc = static_cast<double>(cfg.char_dim());
    double up_in = cfg.concat_init_and_down ? dc + d : d;

    f.embed = cfg.n * d;  // lookup concatenation, negligible but nonzero
    if (cfg.use_initial_transformer)
        f.initial_local = detail::layer_proj_ff_flops(n, dc) +
                          detail::attn_score_flops(n, static_cast<double>(cfg.local_block), dc);
    f.down_conv = 2.0 * m * d * (static_cast<double>(cfg.r) * dc);
    f.core_attention = static_cast<double>(cfg.layers) * detail::attn_score_flops(m, m, d);
    f.core_other = static_cast<double>(cfg.layers) * detail::layer_proj_ff_flops(m, d);
    f.up_conv = 2.0 * n * d * (static_cast<double>(cfg.window) * up_in);
    double q = targeted_positions > 0 ? static_cast<double>(targeted_positions) : n;
    double kv = cfg.attend_to_downsampled ? m : n;
    // q/o projections and FFN scale with the query count, k/v with the keys
    f.final_layer = 4.0 * q * d * d + 4.0 * kv * d * d + 16.0 * q * d * d +
                    detail::attn_score_flops(q, kv, d);
    return f;
}

// a subword-input transformer of the same depth (the mBERT-shaped baseline)
inline FlopsBreakdown subword_baseline_flops(int64_t seq_len, int64_t d, int layers) {
    FlopsBreakdown f;
    double s = static_cast<double>(seq_len);
    double dd = static_cast<double>(d);
    f.embed = s * dd;
    f.core_attention = static_cast<double>(layers) * detail::attn_score_flops(s, s, dd);
    f.core_other = static_cast<double>(layers) * detail::layer_proj_ff_flops(s, dd);
    return f;
}

}  // namespace canine
