#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "canine/checkpoint.hpp"
#include "canine/grad_check.hpp"
#include "canine/pretrain.hpp"
#include "canine/textgen.hpp"

using namespace canine;

namespace {

ModelConfig tiny_model(int64_t n = 64, int64_t d = 16, int layers = 1, int64_t buckets = 64) {
    ModelConfig cfg;
    cfg.enc.n = n;
    cfg.enc.r = 4;
    cfg.enc.d = d;
    cfg.enc.layers = layers;
    cfg.enc.local_block = 16;
    cfg.embed.K = 2;
    cfg.embed.B = buckets;
    cfg.embed.d = d;
    return cfg;
}

TrainConfig tiny_train() {
    TrainConfig t;
    t.batch_size = 2;
    t.steps = 4;
    t.log_every = 1;
    t.wall_clock_throughput = false;
    return t;
}

}  // namespace

TEST_CASE("char mlm batch: single span is fully masked") {
    ModelConfig cfg = tiny_model();
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("hello", cfg.enc.n, cfg.specials);
    Rng rng(1);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    REQUIRE(batch.has_value());
    REQUIRE(batch->gold_positions == std::vector<int64_t>{1, 2, 3, 4, 5});
    REQUIRE(batch->gold_chars == std::vector<uint32_t>{'h', 'e', 'l', 'l', 'o'});
    for (int64_t p : batch->gold_positions)
        REQUIRE(batch->masked_input.at(p) == cfg.specials.mask);
}

TEST_CASE("char mlm batch: bucketed targets are gold mod B") {
    REQUIRE(97 % 16384 == 97);
    REQUIRE(16485 % 16384 == 101);
    ModelConfig cfg = tiny_model();
    cfg.embed.B = 16384;
    TrainConfig tc = tiny_train();
    // plane-1 codepoint 0x4065 = 16485
    std::string text;
    utf8_append(text, 16485);
    CodepointSequence seq = encode_text(text, cfg.enc.n, cfg.specials);
    Rng rng(2);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    REQUIRE(batch.has_value());
    REQUIRE(batch->bucketed_targets == std::vector<int64_t>{101});
}

TEST_CASE("char mlm batch: mask hygiene and coverage budget") {
    ModelConfig cfg = tiny_model(256);
    TrainConfig tc = tiny_train();
    std::string text = "many small words fill this line with gentle noise over and over again";
    CodepointSequence seq = encode_text(text, cfg.enc.n, cfg.specials);
    int64_t eligible = content_length(seq, cfg.specials);
    for (uint64_t s = 0; s < 20; ++s) {
        Rng rng(s);
        auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
        REQUIRE(batch.has_value());
        // unmasked positions are untouched
        for (int64_t i = 0; i < seq.length(); ++i) {
            bool is_gold = std::find(batch->gold_positions.begin(), batch->gold_positions.end(),
                                     i) != batch->gold_positions.end();
            if (is_gold)
                REQUIRE(batch->masked_input.at(i) == cfg.specials.mask);
            else
                REQUIRE(batch->masked_input.at(i) == seq.at(i));
        }
        // coverage reaches the budget without exceeding the cap
        auto covered = static_cast<int64_t>(batch->gold_positions.size());
        REQUIRE(covered >= static_cast<int64_t>(0.15 * static_cast<double>(eligible)));
        REQUIRE(covered <= tc.max_predictions_char);
        // positions strictly increasing, permutation is a bijection
        for (size_t i = 1; i < batch->gold_positions.size(); ++i)
            REQUIRE(batch->gold_positions[i] > batch->gold_positions[i - 1]);
        std::vector<int64_t> sorted = batch->shuffle_perm;
        std::sort(sorted.begin(), sorted.end());
        for (size_t i = 0; i < sorted.size(); ++i) REQUIRE(sorted[i] == static_cast<int64_t>(i));
    }
}

TEST_CASE("char mlm batch: prediction cap binds") {
    ModelConfig cfg = tiny_model(256);
    TrainConfig tc = tiny_train();
    tc.max_predictions_char = 4;
    CodepointSequence seq =
        encode_text("aaa bbb ccc ddd eee fff ggg hhh", cfg.enc.n, cfg.specials);
    Rng rng(3);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    REQUIRE(batch.has_value());
    REQUIRE(static_cast<int64_t>(batch->gold_positions.size()) <= 4);
}

TEST_CASE("char mlm batch: whitespace-only record is skipped") {
    ModelConfig cfg = tiny_model();
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("   ", cfg.enc.n, cfg.specials);
    Rng rng(4);
    REQUIRE_FALSE(make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng).has_value());
}

TEST_CASE("autoregressive head: single prediction depends only on its own features") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(5);
    Rng rng(6);
    Tensor y = Tensor::randn({1, cfg.enc.d}, rng);
    auto run = [&](uint32_t gold) {
        Tape tape;
        ModelCtx ctx(tape, ps, false);
        Var ystar = ctx.constant(y);
        Var eg = embed_gold_chars(ctx, {gold}, cfg, nullptr);
        return autoregressive_char_head(ctx, ystar, eg, {0}, cfg.embed.B, cfg.enc).val();
    };
    // with one slot there is no earlier rank: changing gold cannot change logits
    Tensor a = run('x');
    Tensor b = run('q');
    REQUIRE(a.data == b.data);
    REQUIRE(a.shape == std::vector<int64_t>{1, cfg.embed.B});
}

TEST_CASE("autoregressive head: no leakage from later or equal shuffled ranks") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(7);
    Rng rng(8);
    int64_t p = 5;
    Tensor y = Tensor::randn({p, cfg.enc.d}, rng);
    std::vector<int64_t> perm = {3, 0, 4, 1, 2};  // rank -> slot
    auto run = [&](std::vector<uint32_t> gold) {
        Tape tape;
        ModelCtx ctx(tape, ps, false);
        Var ystar = ctx.constant(y);
        Var eg = embed_gold_chars(ctx, gold, cfg, nullptr);
        return autoregressive_char_head(ctx, ystar, eg, perm, cfg.embed.B, cfg.enc).val();
    };
    std::vector<uint32_t> gold = {'a', 'b', 'c', 'd', 'e'};
    Tensor base = run(gold);
    // perturb the gold char at shuffled rank 2 (slot 4): ranks 0..2 keep
    // bit-identical logits; only ranks > 2 may change
    std::vector<uint32_t> perturbed = gold;
    perturbed[4] = 'Z';
    Tensor changed = run(perturbed);
    std::vector<int64_t> rank_of(p);
    for (int64_t r = 0; r < p; ++r) rank_of[static_cast<size_t>(perm[r])] = r;
    for (int64_t slot = 0; slot < p; ++slot) {
        if (rank_of[static_cast<size_t>(slot)] <= 2) {
            for (int64_t j = 0; j < cfg.embed.B; ++j)
                REQUIRE(base.at(slot, j) == changed.at(slot, j));
        }
    }
    // and the latest rank really does depend on it
    int64_t last_slot = perm[4];
    bool any_diff = false;
    for (int64_t j = 0; j < cfg.embed.B; ++j)
        any_diff = any_diff || base.at(last_slot, j) != changed.at(last_slot, j);
    REQUIRE(any_diff);
}

TEST_CASE("loss_canine_c: zeroed head gives exactly ln(B)") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(9);
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("gentle rivers", cfg.enc.n, cfg.specials);
    Rng rng(10);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    REQUIRE(batch.has_value());
    Tape tape;
    ModelCtx ctx(tape, ps, false);
    Var loss = loss_canine_c(ctx, *batch, cfg);
    // overwrite the output head with zeros and rerun: uniform logits
    ps.put("pretrain/char_head/out/w",
           Tensor::zeros(ps.at("pretrain/char_head/out/w").shape));
    ps.put("pretrain/char_head/out/b", Tensor::zeros({cfg.embed.B}));
    Tape tape2;
    ModelCtx ctx2(tape2, ps, false);
    Var uniform_loss = loss_canine_c(ctx2, *batch, cfg);
    REQUIRE(uniform_loss.val().data[0] ==
            Catch::Approx(std::log(static_cast<double>(cfg.embed.B))).epsilon(1e-12));
    // fresh initialization stays within 5% of ln(B)
    REQUIRE(loss.val().data[0] ==
            Catch::Approx(std::log(static_cast<double>(cfg.embed.B))).epsilon(0.05));
}

TEST_CASE("loss_canine_c: targeted path equals full path") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(11);
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("the quick brown fox", cfg.enc.n, cfg.specials);
    Rng rng(12);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    REQUIRE(batch.has_value());
    Tape t1, t2;
    ModelCtx c1(t1, ps, false), c2(t2, ps, false);
    double a = loss_canine_c(c1, *batch, cfg, nullptr, true).val().data[0];
    double b = loss_canine_c(c2, *batch, cfg, nullptr, false).val().data[0];
    REQUIRE(std::abs(a - b) < 1e-6);
}

TEST_CASE("loss_canine_c: permutation covariance, expectation is stable") {
    ModelConfig cfg = tiny_model();
    ParamStore ps(13);
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("silver light on stone", cfg.enc.n, cfg.specials);
    Rng mask_rng(14);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, mask_rng);
    REQUIRE(batch.has_value());
    auto draw_losses = [&](uint64_t seed, int count) {
        Rng rng(seed);
        std::vector<double> losses;
        for (int i = 0; i < count; ++i) {
            MlmBatchC b = *batch;
            rng.shuffle(b.shuffle_perm);
            Tape tape;
            ModelCtx ctx(tape, ps, false);
            losses.push_back(loss_canine_c(ctx, b, cfg).val().data[0]);
        }
        return losses;
    };
    auto stats = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size() - 1);
        return std::pair<double, double>{mean, var / static_cast<double>(xs.size())};
    };
    auto a = draw_losses(100, 50);
    auto b = draw_losses(200, 50);
    // different permutations give different losses
    bool varies = false;
    for (double x : a) varies = varies || x != a[0];
    REQUIRE(varies);
    auto [ma, sea2] = stats(a);
    auto [mb, seb2] = stats(b);
    REQUIRE(std::abs(ma - mb) <= 2.0 * std::sqrt(sea2 + seb2));
}

TEST_CASE("full CANINE-C loss passes the gradient check at 1e-3") {
    ModelConfig cfg = tiny_model(64, 8, 1, 32);
    cfg.embed.K = 2;
    ParamStore ps(15);
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("grad check text here", cfg.enc.n, cfg.specials);
    Rng rng(16);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    REQUIRE(batch.has_value());
    auto f = [&](ModelCtx& ctx) { return loss_canine_c(ctx, *batch, cfg); };
    GradCheckOptions opt;
    opt.max_components_per_param = 6;
    auto report = grad_check(f, ps, opt);
    REQUIRE(report.passed(1e-3));
}

TEST_CASE("subword vocab: frequent pair is merged") {
    SubwordVocab v = SubwordVocab::build({"aa aa aa"}, 10);
    REQUIRE(v.id_of({'a', 'a'}) >= 0);
    REQUIRE(v.id_of({'a'}) >= 0);
}

TEST_CASE("subword vocab: every corpus codepoint is a singleton entry") {
    SubwordVocab v = SubwordVocab::build({"abc de", "fg"}, 64);
    for (uint32_t c : {'a', 'b', 'c', 'd', 'e', 'f', 'g'}) REQUIRE(v.id_of({c}) >= 0);
}

TEST_CASE("subword vocab: tokenization round-trips") {
    std::vector<std::string> corpus = {"the cat sat on the mat", "a cat and a dog", "the the the"};
    SubwordVocab v = SubwordVocab::build(corpus, 40);
    for (const auto& line : corpus) {
        std::vector<uint32_t> cps = utf8_decode(line);
        std::vector<uint32_t> rebuilt;
        std::vector<uint32_t> word;
        for (size_t i = 0; i <= cps.size(); ++i) {
            if (i == cps.size() || is_unicode_whitespace(cps[i])) {
                if (!word.empty()) {
                    for (const auto& tok : v.tokenize_word(word)) {
                        if (tok.id >= 0) {
                            const auto& e = v.entry(tok.id);
                            rebuilt.insert(rebuilt.end(), e.begin(), e.end());
                        } else {
                            rebuilt.push_back(word[static_cast<size_t>(tok.offset)]);
                        }
                    }
                    word.clear();
                }
                if (i < cps.size()) rebuilt.push_back(cps[i]);
            } else {
                word.push_back(cps[i]);
            }
        }
        REQUIRE(rebuilt == cps);
    }
}

TEST_CASE("subword vocab: size below alphabet is an error") {
    REQUIRE_THROWS_AS(SubwordVocab::build({"abcdefgh"}, 3), std::invalid_argument);
}

TEST_CASE("subword vocab: deterministic build and file round trip") {
    std::vector<std::string> corpus = {"river stone river", "stone light river light"};
    SubwordVocab a = SubwordVocab::build(corpus, 30);
    SubwordVocab b = SubwordVocab::build(corpus, 30);
    REQUIRE(a.to_text() == b.to_text());
    auto path = (std::filesystem::temp_directory_path() / "canine_vocab_test.txt").string();
    a.save(path);
    SubwordVocab c = SubwordVocab::load(path);
    REQUIRE(a.to_text() == c.to_text());
}

TEST_CASE("subword mlm batch: spans, length preservation and caps") {
    ModelConfig cfg = tiny_model(128);
    TrainConfig tc = tiny_train();
    std::vector<std::string> corpus = {"the cat sat on the mat with the hat",
                                       "a cat and a dog and a hat"};
    SubwordVocab vocab = SubwordVocab::build(corpus, 48);
    CodepointSequence seq = encode_text(corpus[0], cfg.enc.n, cfg.specials);
    int hit_replace = 0;
    for (uint64_t s = 0; s < 200; ++s) {
        Rng rng(s);
        auto batch = make_subword_mlm_batch(seq, vocab, cfg.specials, tc, rng);
        REQUIRE(batch.has_value());
        REQUIRE(batch->masked_input.length() == seq.length());
        REQUIRE(static_cast<int64_t>(batch->predict_positions.size()) <=
                tc.max_predictions_subword);
        for (size_t i = 1; i < batch->predict_positions.size(); ++i)
            REQUIRE(batch->predict_positions[i] > batch->predict_positions[i - 1]);
        for (size_t i = 0; i < batch->actions.size(); ++i)
            if (batch->actions[i] == SubwordAction::random_replace) ++hit_replace;
        for (int64_t t : batch->target_subword_ids) {
            REQUIRE(t >= 0);
            REQUIRE(t < vocab.size());
        }
    }
    REQUIRE(hit_replace > 0);
}

TEST_CASE("subword mlm batch: masked span length equals subword length") {
    ModelConfig cfg = tiny_model(128);
    TrainConfig tc = tiny_train();
    tc.mask_fraction = 0.99;  // select everything to observe all actions
    SubwordVocab vocab = SubwordVocab::build({"cat dog the", "cat dog the"}, 16);
    CodepointSequence seq = encode_text("cat dog the", cfg.enc.n, cfg.specials);
    Rng rng(31);
    auto batch = make_subword_mlm_batch(seq, vocab, cfg.specials, tc, rng);
    REQUIRE(batch.has_value());
    // every selected action preserves sequence length; count MASK chars of
    // fully masked spans
    REQUIRE(batch->masked_input.length() == seq.length());
    for (size_t i = 0; i < batch->predict_positions.size(); ++i) {
        if (batch->actions[i] == SubwordAction::mask) {
            int64_t pos = batch->predict_positions[i];
            REQUIRE(batch->masked_input.at(pos) == cfg.specials.mask);
        }
    }
}

TEST_CASE("subword mlm batch: same-length replacement stays in the length bucket") {
    SubwordVocab vocab = SubwordVocab::build({"cat dog the cat dog the bird"}, 32);
    const auto& threes = vocab.same_length_entries(3);
    REQUIRE(std::find_if(threes.begin(), threes.end(), [&](int64_t id) {
                return vocab.entry(id) == std::vector<uint32_t>{'c', 'a', 't'};
            }) != threes.end());
    for (int64_t id : threes) REQUIRE(vocab.entry(id).size() == 3);
}

TEST_CASE("loss_canine_s: zeroed head gives exactly ln(V) and targeted equals full") {
    ModelConfig cfg = tiny_model(128);
    ParamStore ps(17);
    TrainConfig tc = tiny_train();
    SubwordVocab vocab = SubwordVocab::build({"the cat sat on the mat", "a dog and a cat"}, 32);
    CodepointSequence seq = encode_text("the cat sat", cfg.enc.n, cfg.specials);
    Rng rng(18);
    auto batch = make_subword_mlm_batch(seq, vocab, cfg.specials, tc, rng);
    REQUIRE(batch.has_value());
    Tape t0;
    ModelCtx c0(t0, ps, false);
    double init_loss = loss_canine_s(c0, *batch, cfg, vocab).val().data[0];
    REQUIRE(init_loss ==
            Catch::Approx(std::log(static_cast<double>(vocab.size()))).epsilon(0.05));
    ps.put("pretrain/subword_head/w", Tensor::zeros(ps.at("pretrain/subword_head/w").shape));
    Tape t1, t2;
    ModelCtx c1(t1, ps, false), c2(t2, ps, false);
    double a = loss_canine_s(c1, *batch, cfg, vocab, nullptr, true).val().data[0];
    double b = loss_canine_s(c2, *batch, cfg, vocab, nullptr, false).val().data[0];
    REQUIRE(a == Catch::Approx(std::log(static_cast<double>(vocab.size()))).epsilon(1e-12));
    REQUIRE(std::abs(a - b) < 1e-6);
}

TEST_CASE("train: 50-step runs are bit-identical given the seed") {
    auto corpus_path = (std::filesystem::temp_directory_path() / "canine_train_c.txt").string();
    {
        std::ofstream out(corpus_path);
        for (const auto& s : eight_sentences()) out << s << "\n";
    }
    auto run = [&] {
        ModelConfig cfg = tiny_model();
        Model model(cfg, 99);
        CorpusStream data = CorpusStream::from_file(corpus_path, 7);
        TrainConfig tc = tiny_train();
        tc.steps = 50;
        tc.batch_size = 2;
        tc.seed = 7;
        std::vector<MetricsRecord> metrics;
        train(model, data, LossKind::canine_c, tc,
              [&](const MetricsRecord& r) { metrics.push_back(r); });
        return std::pair{model.params.all(), metrics};
    };
    auto [params_a, metrics_a] = run();
    auto [params_b, metrics_b] = run();
    REQUIRE(params_a.size() == params_b.size());
    for (const auto& [name, t] : params_a) REQUIRE(t.data == params_b.at(name).data);
    REQUIRE(metrics_a.size() == metrics_b.size());
    for (size_t i = 0; i < metrics_a.size(); ++i) {
        REQUIRE(metrics_a[i].loss == metrics_b[i].loss);
        REQUIRE(metrics_a[i].lr == metrics_b[i].lr);
    }
}

TEST_CASE("train: warmup fraction shapes the schedule") {
    // 2.5% of 1000 steps = 25 warmup steps, then linear decay to zero
    REQUIRE(lr_schedule(1.0, 0, 1000, 0.025) == Catch::Approx(1.0 / 25.0));
    REQUIRE(lr_schedule(1.0, 24, 1000, 0.025) == Catch::Approx(1.0));
    REQUIRE(lr_schedule(1.0, 25, 1000, 0.025) == Catch::Approx(1.0 * 975.0 / 975.0));
    REQUIRE(lr_schedule(1.0, 999, 1000, 0.025) == Catch::Approx(1.0 / 975.0));
}

TEST_CASE("train: canine-s requires a vocabulary") {
    ModelConfig cfg = tiny_model();
    Model model(cfg, 1);
    CorpusStream data({"the cat"}, 1);
    TrainConfig tc = tiny_train();
    REQUIRE_THROWS_AS(train(model, data, LossKind::canine_s, tc), std::invalid_argument);
}

TEST_CASE("train: one flag switches between the two losses") {
    auto corpus = eight_sentences();
    for (LossKind kind : {LossKind::canine_c, LossKind::canine_s}) {
        ModelConfig cfg = tiny_model();
        Model model(cfg, 5);
        if (kind == LossKind::canine_s)
            model.subword_vocab = SubwordVocab::build(corpus, 128);
        CorpusStream data(corpus, 5);
        TrainConfig tc = tiny_train();
        tc.steps = 2;
        auto result = train(model, data, kind, tc);
        REQUIRE(result.steps_done == 2);
        REQUIRE(std::isfinite(result.final_loss));
    }
}

TEST_CASE("checkpoint: full round trip preserves everything") {
    ModelConfig cfg = tiny_model();
    Model model(cfg, 77);
    model.subword_vocab = SubwordVocab::build({"the cat sat"}, 16);
    // materialize parameters with one forward pass
    CodepointSequence seq = encode_text("materialize", cfg.enc.n, cfg.specials);
    encode(model.params, seq, cfg);
    auto path = (std::filesystem::temp_directory_path() / "canine_ckpt_full.bin").string();
    save_checkpoint(path, model, SaveMode::full);
    Model loaded = load_checkpoint(path);
    REQUIRE(config_to_text(loaded.cfg) == config_to_text(model.cfg));
    REQUIRE(loaded.params.all().size() == model.params.all().size());
    for (const auto& [name, t] : model.params.all())
        REQUIRE(loaded.params.at(name).data == t.data);
    REQUIRE(loaded.subword_vocab.has_value());
    REQUIRE(loaded.subword_vocab->to_text() == model.subword_vocab->to_text());
    REQUIRE(loaded.params.seed() == 77);
}

TEST_CASE("checkpoint: byte-stable across identical saves") {
    ModelConfig cfg = tiny_model();
    Model model(cfg, 13);
    CodepointSequence seq = encode_text("stable bytes", cfg.enc.n, cfg.specials);
    encode(model.params, seq, cfg);
    auto pa = (std::filesystem::temp_directory_path() / "canine_ckpt_a.bin").string();
    auto pb = (std::filesystem::temp_directory_path() / "canine_ckpt_b.bin").string();
    save_checkpoint(pa, model);
    save_checkpoint(pb, model);
    std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    REQUIRE(ba == bb);
}

TEST_CASE("checkpoint: finetune mode drops pretraining heads and subword vocab") {
    ModelConfig cfg = tiny_model();
    Model model(cfg, 7);
    model.subword_vocab = SubwordVocab::build({"the cat"}, 16);
    TrainConfig tc = tiny_train();
    CodepointSequence seq = encode_text("the cat", cfg.enc.n, cfg.specials);
    Rng rng(1);
    auto batch = make_char_mlm_batch(seq, cfg.specials, tc, cfg.embed.B, rng);
    Tape tape;
    ModelCtx ctx(tape, model.params, true);
    loss_canine_c(ctx, *batch, cfg);  // materializes pretrain/ parameters
    REQUIRE(model.params.has("pretrain/char_head/out/w"));
    auto path = (std::filesystem::temp_directory_path() / "canine_ckpt_ft.bin").string();
    save_checkpoint(path, model, SaveMode::finetune);
    Model loaded = load_checkpoint(path);
    REQUIRE_FALSE(loaded.subword_vocab.has_value());
    for (const auto& [name, t] : loaded.params.all())
        REQUIRE(name.rfind("pretrain/", 0) != 0);
    // encoder parameters survive
    REQUIRE(loaded.params.has("encoder/down_conv/w"));
}

TEST_CASE("checkpoint: corrupted config hash is rejected") {
    ModelConfig cfg = tiny_model();
    Model model(cfg, 3);
    CodepointSequence seq = encode_text("x", cfg.enc.n, cfg.specials);
    encode(model.params, seq, cfg);
    auto path = (std::filesystem::temp_directory_path() / "canine_ckpt_bad.bin").string();
    save_checkpoint(path, model);
    // flip a byte inside the embedded config text
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(24);
    f.put('Z');
    f.close();
    REQUIRE_THROWS_AS(load_checkpoint(path), std::runtime_error);
}
