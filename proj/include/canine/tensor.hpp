#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "canine/rng.hpp"

namespace canine {

// Dense row-major tensor of doubles. Rank 1 or 2 in practice.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(checked_numel(shape)), 0.0);
    }

    Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (checked_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int64_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor randn(std::vector<int64_t> s, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = rng.next_normal() * stddev;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int rank() const { return static_cast<int>(shape.size()); }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    int64_t rows() const { return rank() == 2 ? shape[0] : 1; }
    int64_t cols() const { return rank() == 2 ? shape[1] : shape.at(0); }

    double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

    double* row_ptr(int64_t i) { return data.data() + i * shape[1]; }
    const double* row_ptr(int64_t i) const { return data.data() + i * shape[1]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }

    static int64_t checked_numel(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t e : s) {
            if (e <= 0) throw std::invalid_argument("Tensor: non-positive shape extent");
            n *= e;
        }
        return n;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
}

}  // namespace canine
