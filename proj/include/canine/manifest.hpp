#pragma once

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "canine/pretrain.hpp"

namespace canine {

constexpr const char* kBuildId = "canine-desk 0.1.0";

inline std::string iso8601_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Run manifest: written atomically at run start (end_time null), rewritten at
// completion. Exactly one per artifact directory.
class RunManifest {
public:
    RunManifest(std::string dir, std::string command, nlohmann::json config_snapshot,
                uint64_t seed)
        : path_(dir + "/manifest.json") {
        doc_["command"] = std::move(command);
        doc_["config"] = std::move(config_snapshot);
        doc_["seed"] = seed;
        doc_["build_id"] = kBuildId;
        doc_["start_time"] = iso8601_now();
        doc_["end_time"] = nullptr;
        doc_["outputs"] = nlohmann::json::array();
        write();
    }

    void add_output(const std::string& path) {
        doc_["outputs"].push_back(path);
        write();
    }

    void finish() {
        doc_["end_time"] = iso8601_now();
        write();
    }

private:
    void write() const {
        std::string tmp = path_ + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write manifest: " + path_);
            out << doc_.dump(2) << "\n";
        }
        std::remove(path_.c_str());
        if (std::rename(tmp.c_str(), path_.c_str()) != 0)
            throw std::runtime_error("failed to finalize manifest: " + path_);
    }

    std::string path_;
    nlohmann::json doc_;
};

// newline-delimited JSON metrics: {step, loss, lr, chars_per_sec}
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot write metrics file: " + path);
    }

    void operator()(const MetricsRecord& r) {
        nlohmann::json j;
        j["step"] = r.step;
        j["loss"] = r.loss;
        j["lr"] = r.lr;
        j["chars_per_sec"] = r.chars_per_sec;
        out_ << j.dump() << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

}  // namespace canine
