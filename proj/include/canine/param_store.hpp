#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "canine/rng.hpp"
#include "canine/tensor.hpp"

namespace canine {

enum class Init { Normal002, Zeros, Ones };

// Named parameter tensors. Initialization depends only on (name, shape, seed),
// never on creation order, so lazily-built models are reproducible.
class ParamStore {
public:
    explicit ParamStore(uint64_t rng_seed = 0) : seed_(rng_seed) {}

    uint64_t seed() const { return seed_; }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    Tensor& get_or_create(const std::string& name, const std::vector<int64_t>& shape, Init init) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second.shape != shape)
                throw std::invalid_argument("ParamStore: shape mismatch for '" + name + "': have " +
                                            it->second.shape_str() + ", want " +
                                            Tensor::zeros(shape).shape_str());
            return it->second;
        }
        Tensor t = init_tensor(name, shape, init);
        return params_.emplace(name, std::move(t)).first->second;
    }

    Tensor& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
        return it->second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
        return it->second;
    }

    void put(const std::string& name, Tensor t) { params_[name] = std::move(t); }
    void erase(const std::string& name) { params_.erase(name); }

    // sorted by name
    std::map<std::string, Tensor>& all() { return params_; }
    const std::map<std::string, Tensor>& all() const { return params_; }

    int64_t total_parameters() const {
        int64_t n = 0;
        for (const auto& [k, v] : params_) n += v.numel();
        return n;
    }

private:
    Tensor init_tensor(const std::string& name, const std::vector<int64_t>& shape, Init init) const {
        switch (init) {
            case Init::Zeros:
                return Tensor::zeros(shape);
            case Init::Ones:
                return Tensor::full(shape, 1.0);
            case Init::Normal002: {
                Rng rng(seed_ ^ fnv1a64(name));
                return Tensor::randn(shape, rng, 0.02);
            }
        }
        throw std::logic_error("ParamStore: unknown init");
    }

    uint64_t seed_;
    std::map<std::string, Tensor> params_;
};

}  // namespace canine
