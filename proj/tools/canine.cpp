// canine: pre-train, probe and fine-tune a tokenization-free character encoder.
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "canine/checkpoint.hpp"
#include "canine/evaluate.hpp"
#include "canine/flops.hpp"
#include "canine/manifest.hpp"
#include "canine/pretrain.hpp"
#include "canine/tagger.hpp"
#include "canine/textgen.hpp"

namespace fs = std::filesystem;
using namespace canine;
using nlohmann::json;

namespace {

std::string default_out_dir(const std::string& command) {
    const char* base = std::getenv("CANINE_DATA_DIR");
    fs::path root = base && *base ? fs::path(base) : fs::path(".");
    return (root / ("run-" + command)).string();
}

struct EncoderFlags {
    std::string config_file;
    int64_t n = -1, d = -1, d_char = -1, buckets = -1, ngram_buckets = -1;
    int r = -1, layers = -1, local_block = -1, window = -1, heads = -1, hash_k = -1, ngrams = -1;
    double dropout = -1.0;
    std::string embedder;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_file, "flat key=value config file; flags override");
        cmd->add_option("--max-seq-len", n, "max character length n");
        cmd->add_option("--r", r, "downsample rate");
        cmd->add_option("--d", d, "model dimension");
        cmd->add_option("--d-char", d_char, "input character dimension (0: same as d)");
        cmd->add_option("--layers", layers, "deep-stack layers");
        cmd->add_option("--local-block", local_block, "local attention block size");
        cmd->add_option("--window", window, "upsampling conv window");
        cmd->add_option("--heads", heads, "attention heads (0: d/64)");
        cmd->add_option("--hash-k", hash_k, "number of hash functions");
        cmd->add_option("--buckets", buckets, "hash bucket count B");
        cmd->add_option("--ngrams", ngrams, "max n-gram order (enables the n-gram embedder)");
        cmd->add_option("--ngram-buckets", ngram_buckets, "n-gram bucket count");
        cmd->add_option("--embedder", embedder, "hash | ngram | char_vocab");
        cmd->add_option("--dropout", dropout, "dropout probability");
    }

    ModelConfig build() const {
        ModelConfig cfg;
        if (!config_file.empty()) {
            std::ifstream in(config_file);
            if (!in) throw CLI::ValidationError("--config", "cannot open " + config_file);
            std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            cfg = config_from_text(text);
        }
        if (n >= 0) cfg.enc.n = n;
        if (r >= 0) cfg.enc.r = r;
        if (d >= 0) cfg.enc.d = d;
        if (d_char >= 0) cfg.enc.d_char = d_char;
        if (layers >= 0) cfg.enc.layers = layers;
        if (local_block >= 0) cfg.enc.local_block = local_block;
        if (window >= 0) cfg.enc.window = window;
        if (heads >= 0) cfg.enc.heads = heads;
        if (hash_k >= 0) cfg.embed.K = hash_k;
        if (buckets >= 0) cfg.embed.B = buckets;
        if (ngram_buckets >= 0) cfg.embed.ngram_B = ngram_buckets;
        if (dropout >= 0) cfg.enc.dropout = dropout;
        if (!embedder.empty()) cfg.embedder = embedder_kind_from(embedder);
        if (ngrams >= 0) {
            cfg.embed.ngram_N = ngrams;
            if (ngrams > 0 && embedder.empty()) cfg.embedder = EmbedderKind::ngram;
        }
        return cfg;
    }
};

json config_snapshot(const ModelConfig& cfg) {
    json j;
    std::istringstream in(config_to_text(cfg));
    std::string line;
    while (std::getline(in, line)) {
        size_t eq = line.find('=');
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

int cmd_pretrain(const std::string& corpus, const std::string& out_dir, const std::string& loss,
                 const std::string& vocab_file, int64_t char_vocab_size, const EncoderFlags& enc,
                 TrainConfig tc, double stop_below) {
    LossKind kind = loss_kind_from(loss);
    ModelConfig cfg = enc.build();
    cfg.validate();
    tc.validate();

    Model model(cfg, tc.seed);
    size_t skipped = 0;
    std::vector<std::string> lines = load_corpus_lines(corpus, &skipped);
    if (kind == LossKind::canine_s) model.subword_vocab = SubwordVocab::load(vocab_file);
    if (cfg.embedder == EmbedderKind::char_vocab)
        model.char_vocab = CharVocab::build(lines, char_vocab_size);

    fs::create_directories(out_dir);
    RunManifest manifest(out_dir, "pretrain", config_snapshot(cfg), tc.seed);
    MetricsWriter metrics(out_dir + "/metrics.jsonl");
    manifest.add_output(out_dir + "/metrics.jsonl");
    manifest.add_output(out_dir + "/checkpoint.bin");

    CorpusStream data(std::move(lines), tc.seed);
    std::cerr << "corpus: " << data.size() << " records (" << skipped << " invalid skipped)\n";

    auto save = [&](int64_t step) {
        save_checkpoint(out_dir + "/checkpoint.bin", model, SaveMode::full);
        if (tc.checkpoint_every > 0 && step < tc.steps)
            save_checkpoint(out_dir + "/checkpoint-step" + std::to_string(step) + ".bin", model,
                            SaveMode::full);
    };
    TrainResult result = train(model, data, kind, tc, std::ref(metrics), save, stop_below);
    manifest.finish();
    std::cerr << "done: " << result.steps_done << " steps, final loss " << result.final_loss
              << ", skipped " << result.skipped_records << " unmaskable records\n";
    return 0;
}

int cmd_vocab_build(const std::string& corpus, const std::string& out, int64_t size) {
    size_t skipped = 0;
    SubwordVocab v = SubwordVocab::build(load_corpus_lines(corpus, &skipped), size);
    v.save(out);
    std::cerr << "vocab: " << v.size() << " entries -> " << out << "\n";
    return 0;
}

int cmd_encode(const std::string& checkpoint, const std::string& text, const std::string& input,
               const std::string& out, bool emit_y_seq) {
    Model model = load_checkpoint(checkpoint);
    std::vector<std::string> texts;
    if (!input.empty())
        texts = load_corpus_lines(input);
    else
        texts.push_back(text);

    json records = json::array();
    for (const auto& t : texts) {
        CodepointSequence seq = encode_text(t, model.cfg.enc.n, model.cfg.specials);
        EncoderOutputs o = encode(model.params, seq, model.cfg, nullptr, model.char_vocab_ptr());
        json rec;
        rec["text"] = t;
        rec["y_cls"] = o.y_cls.data;
        if (emit_y_seq) {
            json rows = json::array();
            int64_t live = 1 + content_length(seq, model.cfg.specials) + 1;
            for (int64_t i = 0; i < live; ++i) {
                json row = json::array();
                for (int64_t j = 0; j < o.y_seq.dim(1); ++j) row.push_back(o.y_seq.at(i, j));
                rows.push_back(std::move(row));
            }
            rec["y_seq"] = std::move(rows);
        }
        records.push_back(std::move(rec));
    }
    json doc;
    doc["model_config_hash"] = config_hash(model.cfg);
    doc["records"] = std::move(records);
    if (out.empty()) {
        std::cout << doc.dump(2) << "\n";
    } else {
        std::ofstream f(out, std::ios::binary);
        f << doc.dump(2) << "\n";
        std::cerr << "wrote " << out << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& loss,
             uint64_t seed, int64_t max_records, const std::string& out) {
    Model model = load_checkpoint(checkpoint);
    LossKind kind = loss_kind_from(loss);
    TrainConfig tc;  // masking defaults: 15%, 320/80 caps
    tc.seed = seed;
    std::vector<std::string> lines = load_corpus_lines(corpus);
    EvalReport r = evaluate_masked(model, lines, kind, tc, seed, max_records);
    double baseline = kind == LossKind::canine_c
                          ? 1.0 / static_cast<double>(model.cfg.embed.B)
                          : 1.0 / static_cast<double>(model.subword_vocab ? model.subword_vocab->size() : 1);
    json doc;
    doc["loss_kind"] = loss;
    doc["records"] = r.records;
    doc["skipped"] = r.skipped;
    doc["positions"] = r.positions;
    doc["mean_loss"] = r.mean_loss();
    doc["accuracy"] = r.accuracy();
    doc["uniform_baseline"] = baseline;
    doc["accuracy_over_baseline"] = baseline > 0 ? r.accuracy() / baseline : 0.0;
    std::cout << doc.dump(2) << "\n";
    if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        f << doc.dump(2) << "\n";
    }
    return 0;
}

int cmd_finetune(const std::string& checkpoint, const std::string& train_file,
                 const std::string& eval_file, const std::string& out_dir, FinetuneConfig fc) {
    Model model = load_checkpoint(checkpoint);
    auto train_data = load_bio_file(train_file);
    auto eval_data = eval_file.empty() ? train_data : load_bio_file(eval_file);
    LabelSet labels = LabelSet::from_sentences(train_data);

    fs::create_directories(out_dir);
    json snapshot = config_snapshot(model.cfg);
    snapshot["finetune_steps"] = fc.steps;
    snapshot["finetune_lr"] = fc.lr;
    RunManifest manifest(out_dir, "finetune-tagger", snapshot, fc.seed);

    SpanF1 f1 = finetune_tagger(model, train_data, eval_data, labels, fc);
    model.tagger_labels = labels.names;
    save_checkpoint(out_dir + "/tagger.bin", model, SaveMode::finetune);
    manifest.add_output(out_dir + "/tagger.bin");

    json doc;
    doc["labels"] = labels.names;
    doc["span_precision"] = f1.precision();
    doc["span_recall"] = f1.recall();
    doc["span_f1"] = f1.f1();
    doc["gold_spans"] = f1.gold;
    doc["predicted_spans"] = f1.predicted;
    std::cout << doc.dump(2) << "\n";
    std::ofstream f(out_dir + "/report.json", std::ios::binary);
    f << doc.dump(2) << "\n";
    manifest.add_output(out_dir + "/report.json");
    manifest.finish();
    return 0;
}

json flops_row(const std::string& name, const FlopsBreakdown& f) {
    json j;
    j["config"] = name;
    j["core_attention_flops"] = f.core_attention;
    j["core_total_flops"] = f.core_total();
    j["total_flops"] = f.total();
    return j;
}

int cmd_flops(int64_t n, int r, int64_t d, int layers, int64_t subword_len, int64_t targeted) {
    EncoderConfig base;
    base.n = n;
    base.r = r;
    base.d = d;
    base.layers = layers;

    EncoderConfig r1 = base;
    r1.r = 1;
    EncoderConfig r5 = base;
    r5.r = 5;
    EncoderConfig r6 = base;
    r6.r = 6;

    FlopsBreakdown f_r1 = canine_flops(r1);
    FlopsBreakdown f_rx = canine_flops(base);
    FlopsBreakdown f_r5 = canine_flops(r5);
    FlopsBreakdown f_r6 = canine_flops(r6);
    FlopsBreakdown f_sub = subword_baseline_flops(subword_len, d, layers);

    json doc;
    doc["rows"] = json::array({
        flops_row("chars-r1", f_r1),
        flops_row("canine-r" + std::to_string(r), f_rx),
        flops_row("canine-r5", f_r5),
        flops_row("canine-r6", f_r6),
        flops_row("subword-baseline", f_sub),
    });
    doc["core_attention_ratio_r1_over_r" + std::to_string(r)] =
        f_r1.core_attention / f_rx.core_attention;
    doc["ordering"] = json::array();
    doc["ordering"].push_back("examples/sec: chars-r1 < canine-r" + std::to_string(r) +
                              " <= subword-baseline");
    if (targeted > 0) {
        FlopsBreakdown f_t = canine_flops(base, targeted);
        doc["targeted_upsampling"] = flops_row("canine-r" + std::to_string(r) + "-targeted", f_t);
    }
    std::cout << doc.dump(2) << "\n";
    return 0;
}

int cmd_inspect(const std::string& checkpoint) {
    CheckpointInfo info = inspect_checkpoint(checkpoint);
    std::cout << "format_version: " << info.manifest["format_version"] << "\n";
    std::cout << "config_hash: " << info.manifest["config_hash"] << "\n";
    std::cout << "rng_seed: " << info.manifest["rng_seed"] << "\n";
    std::cout << "config:\n";
    std::istringstream in(info.config_text);
    std::string line;
    while (std::getline(in, line)) std::cout << "  " << line << "\n";
    int64_t total = 0;
    std::cout << "params:\n";
    for (const auto& p : info.manifest["params"]) {
        std::cout << "  " << p["name"].get<std::string>() << " [";
        const auto& shape = p["shape"];
        for (size_t i = 0; i < shape.size(); ++i) std::cout << (i ? "x" : "") << shape[i];
        std::cout << "] " << p["dtype"].get<std::string>() << "\n";
        total += p["count"].get<int64_t>();
    }
    std::cout << "total_parameters: " << total << "\n";
    if (info.manifest.contains("subword_vocab"))
        std::cout << "subword_vocab: " << info.manifest["subword_vocab"]["entries"].size()
                  << " entries\n";
    if (info.manifest.contains("tagger_labels"))
        std::cout << "tagger_labels: " << info.manifest["tagger_labels"].dump() << "\n";
    return 0;
}

int cmd_gen_corpus(const std::string& out, int64_t bytes, uint64_t seed, int64_t tagged,
                   const std::string& tagged_out) {
    if (!out.empty()) {
        write_synthetic_corpus(out, bytes, seed);
        std::cerr << "wrote ~" << bytes << " bytes to " << out << "\n";
    }
    if (tagged > 0) {
        if (tagged_out.empty()) throw CLI::ValidationError("--tagged-out", "required with --tagged");
        save_bio_file(tagged_out, synthetic_tagged_corpus(tagged, seed + 1));
        std::cerr << "wrote " << tagged << " tagged sentences to " << tagged_out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CANINE-style tokenization-free character encoder (desk scale)"};
    app.require_subcommand(1);

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "pre-train with the character or subword MLM loss");
    std::string corpus, out_dir, loss = "canine-c", vocab_file;
    int64_t char_vocab_size = 4096;
    EncoderFlags enc;
    TrainConfig tc;
    double stop_below = -1.0;
    bool no_throughput = false;
    pre->add_option("--corpus", corpus, "newline-delimited UTF-8 corpus")->required();
    pre->add_option("--out", out_dir, "output directory");
    pre->add_option("--loss", loss, "canine-c | canine-s")->check(CLI::IsMember({"canine-c", "canine-s"}));
    pre->add_option("--vocab", vocab_file, "subword vocab file (required for canine-s)");
    pre->add_option("--char-vocab-size", char_vocab_size, "char vocab size for the ablation embedder");
    enc.add_to(pre);
    pre->add_option("--steps", tc.steps, "training steps");
    pre->add_option("--batch-size", tc.batch_size, "sequences per step");
    pre->add_option("--lr", tc.lr, "peak learning rate");
    pre->add_option("--warmup-frac", tc.warmup_frac, "warmup fraction of steps");
    pre->add_option("--mask-frac", tc.mask_fraction, "mask fraction");
    pre->add_option("--max-predictions", tc.max_predictions_char, "max char predictions");
    pre->add_option("--max-subword-predictions", tc.max_predictions_subword,
                    "max subword predictions");
    pre->add_option("--seed", tc.seed, "seed for params, data order and masking");
    pre->add_option("--log-every", tc.log_every, "metrics cadence");
    pre->add_option("--ckpt-every", tc.checkpoint_every, "checkpoint cadence (0: end only)");
    pre->add_option("--clip-norm", tc.clip_norm, "global gradient-norm clip (0: off)");
    pre->add_option("--stop-below-loss", stop_below, "stop early once batch loss drops below");
    pre->add_flag("--no-throughput", no_throughput,
                  "write chars_per_sec=0 so metrics are byte-stable");

    // vocab-build
    auto* vb = app.add_subcommand("vocab-build", "derive a subword vocabulary from a corpus");
    std::string vb_corpus, vb_out;
    int64_t vb_size = 1024;
    vb->add_option("--corpus", vb_corpus)->required();
    vb->add_option("--out", vb_out)->required();
    vb->add_option("--size", vb_size, "target vocabulary size");

    // encode
    auto* en = app.add_subcommand("encode", "emit y_cls (and optionally y_seq) for text");
    std::string en_ckpt, en_text, en_input, en_out;
    bool en_yseq = false;
    en->add_option("--checkpoint", en_ckpt)->required();
    en->add_option("--text", en_text, "text to encode");
    en->add_option("--input", en_input, "file of texts, one per line");
    en->add_option("--out", en_out, "output JSON file (default: stdout)");
    en->add_flag("--emit-y-seq", en_yseq, "include per-character rows");

    // eval
    auto* ev = app.add_subcommand("eval", "held-out masked-prediction accuracy and loss");
    std::string ev_ckpt, ev_corpus, ev_loss = "canine-c", ev_out;
    uint64_t ev_seed = 0;
    int64_t ev_max = -1;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--corpus", ev_corpus)->required();
    ev->add_option("--loss", ev_loss)->check(CLI::IsMember({"canine-c", "canine-s"}));
    ev->add_option("--seed", ev_seed, "deterministic masking seed");
    ev->add_option("--max-records", ev_max);
    ev->add_option("--out", ev_out, "also write the report here");

    // finetune-tagger
    auto* ft = app.add_subcommand("finetune-tagger", "fine-tune a per-character BIO tagger");
    std::string ft_ckpt, ft_train, ft_eval, ft_out;
    FinetuneConfig fc;
    ft->add_option("--checkpoint", ft_ckpt)->required();
    ft->add_option("--train", ft_train, "char<TAB>label training file")->required();
    ft->add_option("--eval", ft_eval, "evaluation file (default: training file)");
    ft->add_option("--out", ft_out, "output directory");
    ft->add_option("--steps", fc.steps);
    ft->add_option("--batch-size", fc.batch_size);
    ft->add_option("--lr", fc.lr);
    ft->add_option("--seed", fc.seed);

    // flops
    auto* fl = app.add_subcommand("flops", "analytic FLOP comparison across configurations");
    int64_t fl_n = 2048, fl_d = 768, fl_sub = 512, fl_targeted = 0;
    int fl_r = 4, fl_layers = 12;
    fl->add_option("--n", fl_n);
    fl->add_option("--r", fl_r);
    fl->add_option("--d", fl_d);
    fl->add_option("--layers", fl_layers);
    fl->add_option("--subword-len", fl_sub, "sequence length of the subword baseline");
    fl->add_option("--targeted", fl_targeted, "targeted upsampling position count");

    // inspect
    auto* in = app.add_subcommand("inspect", "print a checkpoint's manifest");
    std::string in_ckpt;
    in->add_option("--checkpoint", in_ckpt)->required();

    // gen-corpus
    auto* gc = app.add_subcommand("gen-corpus", "write deterministic synthetic fixtures");
    std::string gc_out, gc_tagged_out;
    int64_t gc_bytes = 1 << 20, gc_tagged = 0;
    uint64_t gc_seed = 0;
    gc->add_option("--out", gc_out, "corpus file to write");
    gc->add_option("--bytes", gc_bytes, "approximate corpus size");
    gc->add_option("--seed", gc_seed);
    gc->add_option("--tagged", gc_tagged, "also write this many tagged sentences");
    gc->add_option("--tagged-out", gc_tagged_out, "tagged sentence file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pre) {
            if (loss == "canine-s" && vocab_file.empty())
                throw CLI::ValidationError("--vocab", "canine-s requires a subword vocabulary file");
            tc.wall_clock_throughput = !no_throughput;
            if (out_dir.empty()) out_dir = default_out_dir("pretrain");
            return cmd_pretrain(corpus, out_dir, loss, vocab_file, char_vocab_size, enc, tc,
                                stop_below);
        }
        if (*vb) return cmd_vocab_build(vb_corpus, vb_out, vb_size);
        if (*en) return cmd_encode(en_ckpt, en_text, en_input, en_out, en_yseq);
        if (*ev) return cmd_eval(ev_ckpt, ev_corpus, ev_loss, ev_seed, ev_max, ev_out);
        if (*ft) {
            if (ft_out.empty()) ft_out = default_out_dir("finetune");
            return cmd_finetune(ft_ckpt, ft_train, ft_eval, ft_out, fc);
        }
        if (*fl) return cmd_flops(fl_n, fl_r, fl_d, fl_layers, fl_sub, fl_targeted);
        if (*in) return cmd_inspect(in_ckpt);
        if (*gc) return cmd_gen_corpus(gc_out, gc_bytes, gc_seed, gc_tagged, gc_tagged_out);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
