#include <catch2/catch_amalgamated.hpp>

#include "canine/encoder.hpp"
#include "canine/grad_check.hpp"

using namespace canine;

namespace {

ModelConfig tiny_model(int64_t n = 64, int r = 4, int64_t d = 32, int layers = 2) {
    ModelConfig cfg;
    cfg.enc.n = n;
    cfg.enc.r = r;
    cfg.enc.d = d;
    cfg.enc.layers = layers;
    cfg.enc.local_block = 16;
    cfg.enc.window = 4;
    cfg.embed.K = 4;
    cfg.embed.B = 64;
    cfg.embed.d = d;
    return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double mx = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) mx = std::max(mx, std::abs(a.at(i) - b.at(i)));
    return mx;
}

}  // namespace

TEST_CASE("encode: shapes for n=64 r=4 d=32") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(3);
    CodepointSequence seq = encode_text("the dog barks at dawn", cfg.enc.n, cfg.specials);
    EncoderOutputs out = encode(ps, seq, cfg);
    REQUIRE(out.y_seq.shape == std::vector<int64_t>{64, 32});
    REQUIRE(out.y_cls.shape == std::vector<int64_t>{1, 32});
    REQUIRE(out.h_down_prime.shape == std::vector<int64_t>{16, 32});
    REQUIRE(out.h_init.shape == std::vector<int64_t>{64, 32});
}

TEST_CASE("encode: deterministic across repeated calls") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(31);
    CodepointSequence seq = encode_text("repeatable text", cfg.enc.n, cfg.specials);
    EncoderOutputs a = encode(ps, seq, cfg);
    EncoderOutputs b = encode(ps, seq, cfg);
    REQUIRE(a.y_seq.data == b.y_seq.data);
    REQUIRE(a.y_cls.data == b.y_cls.data);
}

TEST_CASE("encode: n=2048 r=4 yields m=512 downsampled positions") {
    ModelConfig cfg = tiny_model(2048, 4, 16, 1);
    cfg.enc.local_block = 128;
    ParamStore ps(7);
    CodepointSequence seq = encode_text("a sentence for the default length", cfg.enc.n, cfg.specials);
    EncoderOutputs out = encode(ps, seq, cfg);
    REQUIRE(out.h_down_prime.shape == std::vector<int64_t>{512, 16});
    REQUIRE(out.y_seq.shape == std::vector<int64_t>{2048, 16});
}

TEST_CASE("y_cls is bit-identical to h_down_prime row 0") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(11);
    CodepointSequence seq = encode_text("cls contract", cfg.enc.n, cfg.specials);
    EncoderOutputs out = encode(ps, seq, cfg);
    for (int64_t j = 0; j < cfg.enc.d; ++j) REQUIRE(out.y_cls.at(0, j) == out.h_down_prime.at(0, j));
}

TEST_CASE("L=0 core is the identity") {
    ModelConfig cfg = tiny_model(64, 4, 32, 0);
    ParamStore ps(13);
    CodepointSequence seq = encode_text("empty stack", cfg.enc.n, cfg.specials);
    Tape tape;
    ModelCtx ctx(tape, ps, false);
    EncoderVars v = encode_vars(ctx, seq, cfg);
    REQUIRE(v.h_down.val().data == v.h_down_prime.val().data);
}

TEST_CASE("r=1 with hand-built identity conv passes h_init through") {
    ModelConfig cfg = tiny_model(16, 1, 8, 0);
    cfg.enc.local_block = 8;
    ParamStore ps(17);
    Tensor w = Tensor::zeros({8, 8});
    for (int64_t i = 0; i < 8; ++i) w.at(i, i) = 1.0;
    ps.put("encoder/down_conv/w", w);
    ps.put("encoder/down_conv/b", Tensor::zeros({8}));
    CodepointSequence seq = encode_text("abcdefghij klm", cfg.enc.n, cfg.specials);
    Tape tape;
    ModelCtx ctx(tape, ps, false);
    EncoderVars v = encode_vars(ctx, seq, cfg);
    // PAD rows are zeroed in the conv input, so compare only non-PAD rows
    for (int64_t i = 0; i < cfg.enc.n; ++i) {
        if (!v.char_valid[static_cast<size_t>(i)]) continue;
        for (int64_t j = 0; j < 8; ++j) REQUIRE(v.h_down.val().at(i, j) == v.h_init.val().at(i, j));
    }
}

TEST_CASE("local block independence of h_init") {
    ModelConfig cfg = tiny_model(64, 4, 32, 1);
    cfg.enc.local_block = 16;
    ParamStore ps(19);
    std::string text_a = "abcdefghij klmnopqrst uvwxyz abcdefghij klmnopqrst uv";
    std::string text_b = text_a;
    // perturb characters beyond position 31 (block 2), leaving block 0-1 inputs alone
    text_b[40] = 'Q';
    text_b[45] = 'Z';
    CodepointSequence sa = encode_text(text_a, cfg.enc.n, cfg.specials);
    CodepointSequence sb = encode_text(text_b, cfg.enc.n, cfg.specials);
    Tape ta, tb;
    ModelCtx ca(ta, ps, false), cb(tb, ps, false);
    EncoderVars va = encode_vars(ca, sa, cfg);
    EncoderVars vb = encode_vars(cb, sb, cfg);
    for (int64_t i = 0; i < 32; ++i)
        for (int64_t j = 0; j < 32; ++j)
            REQUIRE(va.h_init.val().at(i, j) == vb.h_init.val().at(i, j));
}

TEST_CASE("use_initial_transformer=false passes embeddings straight to the conv") {
    ModelConfig cfg = tiny_model();
    cfg.enc.use_initial_transformer = false;
    ParamStore ps(23);
    CodepointSequence seq = encode_text("no initial transformer", cfg.enc.n, cfg.specials);
    Tape tape;
    ModelCtx ctx(tape, ps, false);
    EncoderVars v = encode_vars(ctx, seq, cfg);
    REQUIRE(v.h_init.id == v.e.id);
    REQUIRE_FALSE(ps.has("encoder/initial/attn/q/w"));
}

TEST_CASE("targeted upsampling equals gathered full upsampling") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(29);
    CodepointSequence seq = encode_text("targeted upsampling equivalence", cfg.enc.n, cfg.specials);
    std::vector<int64_t> p = {1, 5, 6, 17, 30};
    EncoderOutputs full = encode(ps, seq, cfg);
    EncoderOutputs targeted = encode(ps, seq, cfg, &p);
    REQUIRE(targeted.y_seq.shape == std::vector<int64_t>{5, 32});
    for (size_t i = 0; i < p.size(); ++i)
        for (int64_t j = 0; j < 32; ++j)
            REQUIRE(std::abs(targeted.y_seq.at(static_cast<int64_t>(i), j) -
                             full.y_seq.at(p[i], j)) < 1e-6);
}

TEST_CASE("targeted upsampling with all positions is the identity gather") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(37);
    CodepointSequence seq = encode_text("full gather", cfg.enc.n, cfg.specials);
    std::vector<int64_t> all(static_cast<size_t>(cfg.enc.n));
    for (int64_t i = 0; i < cfg.enc.n; ++i) all[static_cast<size_t>(i)] = i;
    EncoderOutputs full = encode(ps, seq, cfg);
    EncoderOutputs targeted = encode(ps, seq, cfg, &all);
    REQUIRE(max_abs_diff(full.y_seq, targeted.y_seq) < 1e-6);
}

TEST_CASE("targeted equivalence holds for every ablation flag combination") {
    for (int variant = 0; variant < 4; ++variant) {
        ModelConfig cfg = tiny_model();
        cfg.enc.attend_to_downsampled = variant == 1;
        cfg.enc.residual_final_to_initial = variant == 2;
        cfg.enc.residual_final_to_downsampled = variant == 2 || variant == 3;
        cfg.enc.concat_init_and_down = variant != 3;
        ParamStore ps(41 + static_cast<uint64_t>(variant));
        CodepointSequence seq = encode_text("ablation variants", cfg.enc.n, cfg.specials);
        std::vector<int64_t> p = {0, 7, 8, 33};
        EncoderOutputs full = encode(ps, seq, cfg);
        EncoderOutputs targeted = encode(ps, seq, cfg, &p);
        for (size_t i = 0; i < p.size(); ++i)
            for (int64_t j = 0; j < cfg.enc.d; ++j)
                REQUIRE(std::abs(targeted.y_seq.at(static_cast<int64_t>(i), j) -
                                 full.y_seq.at(p[i], j)) < 1e-6);
    }
}

TEST_CASE("targeted positions validated") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(43);
    CodepointSequence seq = encode_text("bad positions", cfg.enc.n, cfg.specials);
    std::vector<int64_t> out_of_range = {70};
    std::vector<int64_t> not_increasing = {5, 5};
    REQUIRE_THROWS_AS(encode(ps, seq, cfg, &out_of_range), std::invalid_argument);
    REQUIRE_THROWS_AS(encode(ps, seq, cfg, &not_increasing), std::invalid_argument);
}

TEST_CASE("replication index map for m=2 r=3") {
    // forced by replication semantics: downsampled row j covers chars [j*r, (j+1)*r)
    int64_t n = 6, r = 3;
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i / r;
    REQUIRE(idx == std::vector<int64_t>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("PAD invariance: padding content never leaks into live outputs") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(47);
    CodepointSequence seq = encode_text("short text", cfg.enc.n, cfg.specials);
    CodepointSequence corrupted = seq;
    // overwrite PAD positions with arbitrary codepoints, keeping the mask fixed
    std::vector<uint8_t> valid = pad_mask(seq, cfg.specials);
    Tape ta;
    ModelCtx ca(ta, ps, false);
    EncoderVars va = encode_vars(ca, seq, cfg);

    for (int64_t i = 0; i < seq.length(); ++i)
        if (!valid[static_cast<size_t>(i)]) corrupted.cps[static_cast<size_t>(i)] = 'X' + (i % 7);
    // encode with the same mask by treating the corrupted sequence as if PAD;
    // the public contract is simpler: same text re-encoded must match, so we
    // drive the internals directly
    Tape tb;
    ModelCtx cb(tb, ps, false);
    EncoderVars vb;
    vb.char_valid = valid;
    vb.down_valid = va.down_valid;
    vb.e = add_positions(cb, embed_input(cb, corrupted, cfg, nullptr), cfg);
    downsample(cb, vb, cfg);
    vb.h_down_prime = encode_core(cb, vb.h_down, cfg.enc, vb.down_valid);
    vb.y_cls = row(vb.h_down_prime, 0);
    vb.h_up = upsample_features(cb, vb, cfg.enc);
    vb.y_seq = upsample_output(cb, vb, cfg.enc, nullptr);

    REQUIRE(va.y_cls.val().data == vb.y_cls.val().data);
    for (int64_t i = 0; i < cfg.enc.n; ++i) {
        if (!valid[static_cast<size_t>(i)]) continue;
        for (int64_t j = 0; j < cfg.enc.d; ++j)
            REQUIRE(va.y_seq.val().at(i, j) == vb.y_seq.val().at(i, j));
    }
}

TEST_CASE("d_char ablation: initial encoder runs at the reduced width") {
    ModelConfig cfg = tiny_model();
    cfg.enc.d_char = 16;
    cfg.embed.K = 4;
    ParamStore ps(53);
    CodepointSequence seq = encode_text("narrow characters", cfg.enc.n, cfg.specials);
    Tape tape;
    ModelCtx ctx(tape, ps, false);
    EncoderVars v = encode_vars(ctx, seq, cfg);
    REQUIRE(v.h_init.val().shape == std::vector<int64_t>{64, 16});
    REQUIRE(v.h_down.val().shape == std::vector<int64_t>{16, 32});
    REQUIRE(v.y_seq.val().shape == std::vector<int64_t>{64, 32});
    // upsample conv consumes d_char + d features
    REQUIRE(ps.at("encoder/up_conv/w").shape ==
            std::vector<int64_t>{cfg.enc.window * (16 + 32), 32});
}

TEST_CASE("config validation catches bad shapes") {
    ModelConfig cfg = tiny_model();
    cfg.enc.n = 66;  // not divisible by r=4
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny_model();
    cfg.enc.residual_final_to_initial = true;
    cfg.enc.d_char = 16;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("end-to-end gradient check through y_cls probe") {
    ModelConfig cfg = tiny_model(16, 4, 8, 1);
    cfg.enc.local_block = 8;
    cfg.embed.K = 2;
    cfg.embed.B = 16;
    ParamStore ps(59);
    CodepointSequence seq = encode_text("grad check", cfg.enc.n, cfg.specials);
    auto f = [&](ModelCtx& ctx) {
        EncoderVars v = encode_vars(ctx, seq, cfg);
        Var w = ctx.param("probe", {cfg.enc.d, 1}, Init::Normal002);
        return sum(matmul(v.y_cls, w));
    };
    GradCheckOptions opt;
    opt.max_components_per_param = 8;
    auto report = grad_check(f, ps, opt);
    REQUIRE(report.passed(1e-3));
}

TEST_CASE("end-to-end gradient check through summed y_seq") {
    ModelConfig cfg = tiny_model(16, 4, 8, 1);
    cfg.enc.local_block = 8;
    cfg.embed.K = 2;
    cfg.embed.B = 16;
    ParamStore ps(61);
    CodepointSequence seq = encode_text("more grads", cfg.enc.n, cfg.specials);
    std::vector<int64_t> p = {1, 3, 9};
    auto f = [&](ModelCtx& ctx) {
        EncoderVars v = encode_vars(ctx, seq, cfg, &p);
        Var w = ctx.param("probe", {cfg.enc.d, 1}, Init::Normal002);
        return sum(matmul(v.y_seq, w));
    };
    GradCheckOptions opt;
    opt.max_components_per_param = 8;
    auto report = grad_check(f, ps, opt);
    REQUIRE(report.passed(1e-3));
}
