#pragma once

#include <map>
#include <sstream>
#include <string>

#include "canine/model.hpp"

namespace canine {

namespace detail {

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

}  // namespace detail

// Flat key=value serialization of the model configuration, sorted by key.
// This exact text is embedded verbatim in checkpoints.
inline std::string config_to_text(const ModelConfig& cfg) {
    std::map<std::string, std::string> kv;
    kv["n"] = std::to_string(cfg.enc.n);
    kv["r"] = std::to_string(cfg.enc.r);
    kv["d"] = std::to_string(cfg.enc.d);
    kv["d_char"] = std::to_string(cfg.enc.d_char);
    kv["layers"] = std::to_string(cfg.enc.layers);
    kv["local_block"] = std::to_string(cfg.enc.local_block);
    kv["window"] = std::to_string(cfg.enc.window);
    kv["heads"] = std::to_string(cfg.enc.heads);
    kv["use_initial_transformer"] = cfg.enc.use_initial_transformer ? "1" : "0";
    kv["attend_to_downsampled"] = cfg.enc.attend_to_downsampled ? "1" : "0";
    kv["residual_final_to_initial"] = cfg.enc.residual_final_to_initial ? "1" : "0";
    kv["residual_final_to_downsampled"] = cfg.enc.residual_final_to_downsampled ? "1" : "0";
    kv["concat_init_and_down"] = cfg.enc.concat_init_and_down ? "1" : "0";
    kv["dropout"] = detail::fmt_double(cfg.enc.dropout);
    kv["ln_eps"] = detail::fmt_double(cfg.enc.ln_eps);
    kv["embedder"] = embedder_kind_name(cfg.embedder);
    kv["embed.K"] = std::to_string(cfg.embed.K);
    kv["embed.B"] = std::to_string(cfg.embed.B);
    kv["embed.ngram_N"] = std::to_string(cfg.embed.ngram_N);
    kv["embed.ngram_B"] = std::to_string(cfg.embed.ngram_B);
    kv["embed.hash_seed"] = std::to_string(cfg.embed.hash_seed);
    kv["specials.cls"] = std::to_string(cfg.specials.cls);
    kv["specials.sep"] = std::to_string(cfg.specials.sep);
    kv["specials.mask"] = std::to_string(cfg.specials.mask);
    kv["specials.pad"] = std::to_string(cfg.specials.pad);
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

// Applies one key=value override; throws on unknown keys or unparsable values.
inline void config_set(ModelConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "n") cfg.enc.n = std::stoll(value);
        else if (key == "r") cfg.enc.r = std::stoi(value);
        else if (key == "d") cfg.enc.d = std::stoll(value);
        else if (key == "d_char") cfg.enc.d_char = std::stoll(value);
        else if (key == "layers") cfg.enc.layers = std::stoi(value);
        else if (key == "local_block") cfg.enc.local_block = std::stoi(value);
        else if (key == "window") cfg.enc.window = std::stoi(value);
        else if (key == "heads") cfg.enc.heads = std::stoi(value);
        else if (key == "use_initial_transformer") cfg.enc.use_initial_transformer = detail::parse_bool(value);
        else if (key == "attend_to_downsampled") cfg.enc.attend_to_downsampled = detail::parse_bool(value);
        else if (key == "residual_final_to_initial") cfg.enc.residual_final_to_initial = detail::parse_bool(value);
        else if (key == "residual_final_to_downsampled") cfg.enc.residual_final_to_downsampled = detail::parse_bool(value);
        else if (key == "concat_init_and_down") cfg.enc.concat_init_and_down = detail::parse_bool(value);
        else if (key == "dropout") cfg.enc.dropout = std::stod(value);
        else if (key == "ln_eps") cfg.enc.ln_eps = std::stod(value);
        else if (key == "embedder") cfg.embedder = embedder_kind_from(value);
        else if (key == "embed.K") cfg.embed.K = std::stoi(value);
        else if (key == "embed.B") cfg.embed.B = std::stoll(value);
        else if (key == "embed.ngram_N") cfg.embed.ngram_N = std::stoi(value);
        else if (key == "embed.ngram_B") cfg.embed.ngram_B = std::stoll(value);
        else if (key == "embed.hash_seed") cfg.embed.hash_seed = std::stoull(value);
        else if (key == "specials.cls") cfg.specials.cls = static_cast<uint32_t>(std::stoul(value));
        else if (key == "specials.sep") cfg.specials.sep = static_cast<uint32_t>(std::stoul(value));
        else if (key == "specials.mask") cfg.specials.mask = static_cast<uint32_t>(std::stoul(value));
        else if (key == "specials.pad") cfg.specials.pad = static_cast<uint32_t>(std::stoul(value));
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad value for '" + key + "': " + value);
    }
}

inline ModelConfig config_from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " has no '='");
        config_set(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

inline uint64_t config_hash(const ModelConfig& cfg) { return fnv1a64(config_to_text(cfg)); }

}  // namespace canine
