#pragma once

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "canine/config.hpp"
#include "canine/model.hpp"

namespace canine {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores raw little-endian IEEE-754 arrays");

constexpr char kCheckpointMagic[8] = {'C', 'A', 'N', 'I', 'N', 'E', '0', '1'};
constexpr uint32_t kCheckpointVersion = 1;

enum class SaveMode {
    full,      // everything, including pre-training heads and the subword vocab
    finetune,  // drops pretrain/* parameters and the subword vocabulary
};

// Layout: magic, u32 version, u64 config length + verbatim config text,
// u64 manifest length + manifest JSON, then raw f64 arrays in manifest order.
// Byte-stable across runs: parameter order is the sorted name order and the
// manifest carries no timestamps.
inline void save_checkpoint(const std::string& path, const Model& model,
                            SaveMode mode = SaveMode::full) {
    std::string config_text = config_to_text(model.cfg);

    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["config_hash"] = fnv1a64(config_text);
    manifest["rng_seed"] = model.params.seed();
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, tensor] : model.params.all()) {
        if (mode == SaveMode::finetune && name.rfind("pretrain/", 0) == 0) continue;
        nlohmann::json p;
        p["name"] = name;
        p["shape"] = tensor.shape;
        p["dtype"] = "f64";
        p["count"] = tensor.numel();
        params.push_back(std::move(p));
    }
    manifest["params"] = std::move(params);
    if (!model.tagger_labels.empty()) manifest["tagger_labels"] = model.tagger_labels;
    if (model.char_vocab) manifest["char_vocab"] = model.char_vocab->codepoints;
    if (model.subword_vocab && mode == SaveMode::full) {
        nlohmann::json sv;
        sv["entries"] = nlohmann::json::array();
        for (int64_t i = 0; i < model.subword_vocab->size(); ++i) {
            sv["entries"].push_back(
                {{"s", utf8_encode(model.subword_vocab->entry(i))},
                 {"freq", model.subword_vocab->frequency(i)}});
        }
        sv["merges"] = nlohmann::json::array();
        for (const auto& m : model.subword_vocab->merges())
            sv["merges"].push_back({m.left, m.right, m.merged});
        manifest["subword_vocab"] = std::move(sv);
    }
    std::string manifest_text = manifest.dump();

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
        auto write_block = [&](const std::string& s) {
            uint64_t len = s.size();
            out.write(reinterpret_cast<const char*>(&len), sizeof(len));
            out.write(s.data(), static_cast<std::streamsize>(s.size()));
        };
        write_block(config_text);
        write_block(manifest_text);
        for (const auto& entry : manifest["params"]) {
            const Tensor& t = model.params.at(entry["name"].get<std::string>());
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        }
        if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
    }
    std::remove(path.c_str());
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("failed to finalize checkpoint: " + path);
}

struct CheckpointInfo {
    ModelConfig cfg;
    std::string config_text;
    nlohmann::json manifest;
};

inline CheckpointInfo read_checkpoint_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version in " + path);
    auto read_block = [&](const char* what) {
        uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string s(len, '\0');
        in.read(s.data(), static_cast<std::streamsize>(len));
        if (!in) throw std::runtime_error(std::string("truncated checkpoint ") + what + ": " + path);
        return s;
    };
    CheckpointInfo info;
    info.config_text = read_block("config");
    info.manifest = nlohmann::json::parse(read_block("manifest"));
    // integrity first: the stored hash must match the verbatim config text
    if (info.manifest.at("config_hash").get<uint64_t>() != fnv1a64(info.config_text))
        throw std::runtime_error("checkpoint config hash mismatch: " + path);
    info.cfg = config_from_text(info.config_text);
    return info;
}

inline CheckpointInfo inspect_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_checkpoint_header(in, path);
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    CheckpointInfo info = read_checkpoint_header(in, path);

    Model model(info.cfg, info.manifest.at("rng_seed").get<uint64_t>());
    for (const auto& entry : info.manifest.at("params")) {
        if (entry.at("dtype").get<std::string>() != "f64")
            throw std::runtime_error("unsupported dtype in checkpoint: " + path);
        std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint data: " + path);
        model.params.put(entry.at("name").get<std::string>(), std::move(t));
    }
    if (info.manifest.contains("tagger_labels"))
        model.tagger_labels = info.manifest["tagger_labels"].get<std::vector<std::string>>();
    if (info.manifest.contains("char_vocab")) {
        CharVocab v;
        v.codepoints = info.manifest["char_vocab"].get<std::vector<uint32_t>>();
        for (size_t i = 0; i < v.codepoints.size(); ++i)
            v.ids.emplace(v.codepoints[i], static_cast<int64_t>(i) + 1);
        model.char_vocab = std::move(v);
    }
    if (info.manifest.contains("subword_vocab")) {
        // rebuild through the text format to reuse its parser and validation
        std::string text = "canine-subword-vocab v1\n";
        const auto& sv = info.manifest["subword_vocab"];
        text += "entries " + std::to_string(sv["entries"].size()) + "\n";
        for (const auto& e : sv["entries"])
            text += e["s"].get<std::string>() + "\t" + std::to_string(e["freq"].get<int64_t>()) + "\n";
        text += "merges " + std::to_string(sv["merges"].size()) + "\n";
        for (const auto& m : sv["merges"])
            text += std::to_string(m[0].get<int64_t>()) + " " + std::to_string(m[1].get<int64_t>()) +
                    " " + std::to_string(m[2].get<int64_t>()) + "\n";
        std::istringstream vin(text);
        model.subword_vocab = SubwordVocab::parse(vin, path);
    }
    return model;
}

}  // namespace canine
