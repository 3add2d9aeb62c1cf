#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "canine/kernels.hpp"
#include "canine/tensor.hpp"

namespace canine {

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
    const Tensor& grad() const;
    bool requires_grad() const;
    int64_t rows() const { return val().rows(); }
    int64_t cols() const { return val().cols(); }
};

// Reverse-mode tape. Nodes are created in topological order by construction,
// so the backward sweep is a reverse iteration over creation order.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated iff requires_grad
        bool requires_grad = false;
        std::function<void(Tape&)> backward;  // empty for leaves
    };

    Var leaf(Tensor value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.grad = Tensor::zeros(n.value.shape);
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
    }

    // Creates an output node; the caller installs the backward closure via set_backward.
    Var output(Tensor value, bool requires_grad) { return leaf(std::move(value), requires_grad); }

    void set_backward(Var v, std::function<void(Tape&)> fn) {
        node(v.id).backward = std::move(fn);
    }

    Node& node(int32_t id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
    size_t size() const { return nodes_.size(); }

    Tensor& grad_of(int32_t id) { return node(id).grad; }
    const Tensor& val_of(int32_t id) const { return node(id).value; }

    // Seeds d(root)/d(root) = 1 and propagates to all ancestors.
    void backward(Var root) {
        if (root.tape != this) throw std::invalid_argument("backward: var not on this tape");
        Node& r = node(root.id);
        if (r.value.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
        if (!r.requires_grad) return;
        r.grad.data[0] = 1.0;
        for (int32_t i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.requires_grad && n.backward) n.backward(*this);
        }
    }

private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::val() const { return tape->node(id).value; }
inline const Tensor& Var::grad() const { return tape->node(id).grad; }
inline bool Var::requires_grad() const { return tape->node(id).requires_grad; }

namespace detail {
inline bool any_grad(std::initializer_list<Var> vs) {
    for (const Var& v : vs)
        if (v.requires_grad()) return true;
    return false;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// primitive ops
// ---------------------------------------------------------------------------

// out = a @ b
inline Var matmul(Var a, Var b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: bad shapes " + A.shape_str() + " * " + B.shape_str());
    int64_t n = A.dim(0), k = A.dim(1), m = B.dim(1);
    Tensor val({n, m});
    kern::matmul_acc(A.data.data(), B.data.data(), val.data.data(), n, k, m);
    Var out = a.tape->output(std::move(val), detail::any_grad({a, b}));
    if (out.requires_grad()) {
        int32_t oid = out.id, ida = a.id, idb = b.id;
        out.tape->set_backward(out, [oid, ida, idb, n, k, m](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            if (t.node(ida).requires_grad)
                kern::matmul_bt_acc(g.data.data(), t.val_of(idb).data.data(),
                                    t.grad_of(ida).data.data(), n, m, k);
            if (t.node(idb).requires_grad)
                kern::matmul_at_acc(t.val_of(ida).data.data(), g.data.data(),
                                    t.grad_of(idb).data.data(), k, n, m);
        });
    }
    return out;
}

// elementwise a + b
inline Var add(Var a, Var b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require_same_shape(A, B, "add");
    Tensor val = A;
    for (int64_t i = 0; i < val.numel(); ++i) val.at(i) += B.at(i);
    Var out = a.tape->output(std::move(val), detail::any_grad({a, b}));
    if (out.requires_grad()) {
        int32_t oid = out.id, ida = a.id, idb = b.id;
        out.tape->set_backward(out, [oid, ida, idb](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            for (int32_t p : {ida, idb})
                if (t.node(p).requires_grad) {
                    Tensor& pg = t.grad_of(p);
                    for (int64_t i = 0; i < g.numel(); ++i) pg.at(i) += g.at(i);
                }
        });
    }
    return out;
}

// rows of a plus bias vector
inline Var add_bias(Var a, Var bias) {
    const Tensor& A = a.val();
    const Tensor& B = bias.val();
    if (A.rank() != 2 || B.rank() != 1 || B.dim(0) != A.dim(1))
        throw std::invalid_argument("add_bias: bad shapes " + A.shape_str() + " + " + B.shape_str());
    int64_t n = A.dim(0), m = A.dim(1);
    Tensor val = A;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) val.at(i, j) += B.at(j);
    Var out = a.tape->output(std::move(val), detail::any_grad({a, bias}));
    if (out.requires_grad()) {
        int32_t oid = out.id, ida = a.id, idb = bias.id;
        out.tape->set_backward(out, [oid, ida, idb, n, m](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            if (t.node(ida).requires_grad) {
                Tensor& ga = t.grad_of(ida);
                for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
            }
            if (t.node(idb).requires_grad) {
                Tensor& gb = t.grad_of(idb);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < m; ++j) gb.at(j) += g.at(i, j);
            }
        });
    }
    return out;
}

// elementwise a * b
inline Var mul(Var a, Var b) {
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require_same_shape(A, B, "mul");
    Tensor val = A;
    for (int64_t i = 0; i < val.numel(); ++i) val.at(i) *= B.at(i);
    Var out = a.tape->output(std::move(val), detail::any_grad({a, b}));
    if (out.requires_grad()) {
        int32_t oid = out.id, ida = a.id, idb = b.id;
        out.tape->set_backward(out, [oid, ida, idb](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            if (t.node(ida).requires_grad) {
                Tensor& ga = t.grad_of(ida);
                const Tensor& vb = t.val_of(idb);
                for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * vb.at(i);
            }
            if (t.node(idb).requires_grad) {
                Tensor& gb = t.grad_of(idb);
                const Tensor& va = t.val_of(ida);
                for (int64_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i) * va.at(i);
            }
        });
    }
    return out;
}

inline Var scale(Var a, double c) {
    Tensor val = a.val();
    for (auto& x : val.data) x *= c;
    Var out = a.tape->output(std::move(val), a.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, ida = a.id;
        out.tape->set_backward(out, [oid, ida, c](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            Tensor& ga = t.grad_of(ida);
            for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += c * g.at(i);
        });
    }
    return out;
}

// exact GELU: 0.5 x (1 + erf(x / sqrt(2)))
inline Var gelu(Var a) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Tensor val = a.val();
    for (auto& x : val.data) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    Var out = a.tape->output(std::move(val), a.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, ida = a.id;
        out.tape->set_backward(out, [oid, ida](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            const Tensor& x = t.val_of(ida);
            Tensor& ga = t.grad_of(ida);
            for (int64_t i = 0; i < g.numel(); ++i) {
                double xi = x.at(i);
                double d = 0.5 * (1.0 + std::erf(xi * kInvSqrt2)) +
                           xi * kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
                ga.at(i) += g.at(i) * d;
            }
        });
    }
    return out;
}

// per-row normalization with learned scale/shift
inline Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& X = x.val();
    if (X.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 input required");
    int64_t n = X.dim(0), d = X.dim(1);
    const Tensor& G = gamma.val();
    const Tensor& B = beta.val();
    if (G.rank() != 1 || G.dim(0) != d || B.rank() != 1 || B.dim(0) != d)
        throw std::invalid_argument("layer_norm: scale/shift must be [d]");
    Tensor val({n, d});
    auto xhat = std::make_shared<Tensor>(Tensor::zeros({n, d}));
    auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const double* xi = X.row_ptr(i);
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[static_cast<size_t>(i)] = rs;
        for (int64_t j = 0; j < d; ++j) {
            double h = (xi[j] - mean) * rs;
            xhat->at(i, j) = h;
            val.at(i, j) = G.at(j) * h + B.at(j);
        }
    }
    Var out = x.tape->output(std::move(val), detail::any_grad({x, gamma, beta}));
    if (out.requires_grad()) {
        int32_t oid = out.id, idx = x.id, idg = gamma.id, idb = beta.id;
        out.tape->set_backward(out, [oid, idx, idg, idb, n, d, xhat, rstd](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            const Tensor& G = t.val_of(idg);
            if (t.node(idb).requires_grad) {
                Tensor& gb = t.grad_of(idb);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) gb.at(j) += g.at(i, j);
            }
            if (t.node(idg).requires_grad) {
                Tensor& gg = t.grad_of(idg);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < d; ++j) gg.at(j) += g.at(i, j) * xhat->at(i, j);
            }
            if (t.node(idx).requires_grad) {
                Tensor& gx = t.grad_of(idx);
                for (int64_t i = 0; i < n; ++i) {
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        double dh = g.at(i, j) * G.at(j);
                        mean_dh += dh;
                        mean_dh_h += dh * xhat->at(i, j);
                    }
                    mean_dh /= static_cast<double>(d);
                    mean_dh_h /= static_cast<double>(d);
                    double rs = (*rstd)[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < d; ++j) {
                        double dh = g.at(i, j) * G.at(j);
                        gx.at(i, j) += rs * (dh - mean_dh - xhat->at(i, j) * mean_dh_h);
                    }
                }
            }
        });
    }
    return out;
}

// Boolean attention mask, shared between forward and backward.
struct AttnMask {
    int64_t nq = 0, nk = 0;
    std::shared_ptr<std::vector<uint8_t>> allow;

    AttnMask() = default;
    AttnMask(int64_t q, int64_t k)
        : nq(q), nk(k), allow(std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(q * k), 1)) {}

    uint8_t& at(int64_t i, int64_t j) { return (*allow)[static_cast<size_t>(i * nk + j)]; }
    uint8_t at(int64_t i, int64_t j) const { return (*allow)[static_cast<size_t>(i * nk + j)]; }
};

// Multi-head scaled-dot-product attention over already-projected q/k/v.
// Fully masked query rows produce zero output.
inline Var mha_core(Var q, Var k, Var v, int heads, const AttnMask& mask) {
    const Tensor& Q = q.val();
    const Tensor& K = k.val();
    const Tensor& V = v.val();
    if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
        throw std::invalid_argument("mha_core: rank-2 inputs required");
    int64_t nq = Q.dim(0), d = Q.dim(1), nk = K.dim(0);
    if (K.dim(1) != d || V.dim(0) != nk || V.dim(1) != d)
        throw std::invalid_argument("mha_core: q/k/v dims disagree");
    if (heads <= 0 || d % heads != 0)
        throw std::invalid_argument("mha_core: head count must divide model dim");
    if (mask.nq != nq || mask.nk != nk)
        throw std::invalid_argument("mha_core: mask shape mismatch");
    int64_t dh = d / heads;
    double sc = 1.0 / std::sqrt(static_cast<double>(dh));

    bool rg = detail::any_grad({q, k, v});
    // softmax probabilities per head, kept for backward
    std::shared_ptr<Tensor> probs;
    if (rg) probs = std::make_shared<Tensor>(Tensor::zeros({heads * nq, nk}));

    Tensor val({nq, d});
    std::vector<double> srow(static_cast<size_t>(nk));
    for (int h = 0; h < heads; ++h) {
        int64_t off = h * dh;
        for (int64_t i = 0; i < nq; ++i) {
            const double* qi = Q.row_ptr(i) + off;
            double mx = -1e300;
            for (int64_t j = 0; j < nk; ++j) {
                if (!mask.at(i, j)) continue;
                const double* kj = K.row_ptr(j) + off;
                double s = 0.0;
                for (int64_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                s *= sc;
                srow[static_cast<size_t>(j)] = s;
                if (s > mx) mx = s;
            }
            double z = 0.0;
            for (int64_t j = 0; j < nk; ++j) {
                if (!mask.at(i, j)) {
                    srow[static_cast<size_t>(j)] = 0.0;
                    continue;
                }
                double p = std::exp(srow[static_cast<size_t>(j)] - mx);
                srow[static_cast<size_t>(j)] = p;
                z += p;
            }
            double* out_i = val.row_ptr(i) + off;
            if (z <= 0.0) continue;  // fully masked row stays zero
            double invz = 1.0 / z;
            for (int64_t j = 0; j < nk; ++j) {
                double p = srow[static_cast<size_t>(j)] * invz;
                if (p == 0.0) continue;
                const double* vj = V.row_ptr(j) + off;
                for (int64_t c = 0; c < dh; ++c) out_i[c] += p * vj[c];
                if (rg) probs->at(h * nq + i, j) = p;
            }
        }
    }

    Var out = q.tape->output(std::move(val), rg);
    if (rg) {
        int32_t oid = out.id, idq = q.id, idk = k.id, idv = v.id;
        out.tape->set_backward(out, [oid, idq, idk, idv, heads, nq, nk, dh, sc, probs](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            const Tensor& Q = t.val_of(idq);
            const Tensor& K = t.val_of(idk);
            const Tensor& V = t.val_of(idv);
            bool need_q = t.node(idq).requires_grad;
            bool need_k = t.node(idk).requires_grad;
            bool need_v = t.node(idv).requires_grad;
            std::vector<double> dp(static_cast<size_t>(nk));
            for (int h = 0; h < heads; ++h) {
                int64_t off = h * dh;
                for (int64_t i = 0; i < nq; ++i) {
                    const double* gi = g.row_ptr(i) + off;
                    const double* prow = probs->row_ptr(h * nq + i);
                    // dP = dO . V^T restricted to nonzero probs
                    double dot = 0.0;
                    for (int64_t j = 0; j < nk; ++j) {
                        double p = prow[j];
                        if (p == 0.0) {
                            dp[static_cast<size_t>(j)] = 0.0;
                            continue;
                        }
                        const double* vj = V.row_ptr(j) + off;
                        double s = 0.0;
                        for (int64_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
                        dp[static_cast<size_t>(j)] = s;
                        dot += s * p;
                    }
                    for (int64_t j = 0; j < nk; ++j) {
                        double p = prow[j];
                        if (p == 0.0) continue;
                        double ds = p * (dp[static_cast<size_t>(j)] - dot);  // dL/dS_ij
                        if (need_v) {
                            double* gv = t.grad_of(idv).row_ptr(j) + off;
                            for (int64_t c = 0; c < dh; ++c) gv[c] += p * gi[c];
                        }
                        if (need_q) {
                            double* gq = t.grad_of(idq).row_ptr(i) + off;
                            const double* kj = K.row_ptr(j) + off;
                            for (int64_t c = 0; c < dh; ++c) gq[c] += ds * sc * kj[c];
                        }
                        if (need_k) {
                            double* gk = t.grad_of(idk).row_ptr(j) + off;
                            const double* qi = Q.row_ptr(i) + off;
                            for (int64_t c = 0; c < dh; ++c) gk[c] += ds * sc * qi[c];
                        }
                    }
                }
            }
        });
    }
    return out;
}

// 1-D convolution over the row axis. Weight layout [kernel*din, dout]; output
// length is rows/stride (rows must divide evenly). Symmetric zero padding:
// left pad (kernel-1)/2 of the padding total (out-1)*stride + kernel - rows.
inline Var conv1d(Var x, Var w, Var b, int kernel, int stride) {
    const Tensor& X = x.val();
    const Tensor& W = w.val();
    const Tensor& B = b.val();
    if (X.rank() != 2 || W.rank() != 2) throw std::invalid_argument("conv1d: rank-2 x/w required");
    int64_t n = X.dim(0), din = X.dim(1);
    if (kernel <= 0 || stride <= 0) throw std::invalid_argument("conv1d: kernel/stride must be positive");
    if (n % stride != 0)
        throw std::invalid_argument("conv1d: rows not divisible by stride");
    if (W.dim(0) != static_cast<int64_t>(kernel) * din)
        throw std::invalid_argument("conv1d: weight rows must be kernel*din");
    int64_t dout = W.dim(1);
    if (B.rank() != 1 || B.dim(0) != dout) throw std::invalid_argument("conv1d: bias must be [dout]");
    int64_t nout = n / stride;
    int64_t pad_total = (nout - 1) * stride + kernel - n;
    if (pad_total < 0) pad_total = 0;
    int64_t pad_left = pad_total / 2;
    if (pad_total > 0 && pad_total % 2 != 0) pad_left = (kernel - 1) / 2;

    Tensor val({nout, dout});
    for (int64_t j = 0; j < nout; ++j) {
        double* oj = val.row_ptr(j);
        for (int64_t c = 0; c < dout; ++c) oj[c] = B.at(c);
        for (int t = 0; t < kernel; ++t) {
            int64_t ii = j * stride - pad_left + t;
            if (ii < 0 || ii >= n) continue;
            kern::matmul_acc(X.row_ptr(ii), W.row_ptr(static_cast<int64_t>(t) * din), oj, 1, din, dout);
        }
    }
    Var out = x.tape->output(std::move(val), detail::any_grad({x, w, b}));
    if (out.requires_grad()) {
        int32_t oid = out.id, idx = x.id, idw = w.id, idb = b.id;
        out.tape->set_backward(out, [oid, idx, idw, idb, kernel, stride, n, din, dout, nout,
                                     pad_left](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            if (t.node(idb).requires_grad) {
                Tensor& gb = t.grad_of(idb);
                for (int64_t j = 0; j < nout; ++j)
                    for (int64_t c = 0; c < dout; ++c) gb.at(c) += g.at(j, c);
            }
            bool need_x = t.node(idx).requires_grad;
            bool need_w = t.node(idw).requires_grad;
            if (!need_x && !need_w) return;
            const Tensor& X = t.val_of(idx);
            const Tensor& W = t.val_of(idw);
            for (int64_t j = 0; j < nout; ++j) {
                const double* gj = g.row_ptr(j);
                for (int tt = 0; tt < kernel; ++tt) {
                    int64_t ii = j * stride - pad_left + tt;
                    if (ii < 0 || ii >= n) continue;
                    if (need_x)
                        kern::matmul_bt_acc(gj, W.row_ptr(static_cast<int64_t>(tt) * din),
                                            t.grad_of(idx).row_ptr(ii), 1, dout, din);
                    if (need_w)
                        kern::matmul_at_acc(X.row_ptr(ii), gj,
                                            t.grad_of(idw).row_ptr(static_cast<int64_t>(tt) * din), din,
                                            1, dout);
                }
            }
        });
    }
    return out;
}

// out[i, :] = x[idx[i], :]; backward scatter-adds. Also serves as embedding
// lookup and row replication.
inline Var gather_rows(Var x, std::vector<int64_t> idx) {
    const Tensor& X = x.val();
    if (X.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 input required");
    int64_t n = X.dim(0), d = X.dim(1);
    int64_t k = static_cast<int64_t>(idx.size());
    if (k == 0) throw std::invalid_argument("gather_rows: empty index list");
    for (int64_t i : idx)
        if (i < 0 || i >= n) throw std::invalid_argument("gather_rows: index out of range");
    Tensor val({k, d});
    for (int64_t i = 0; i < k; ++i) {
        const double* src = X.row_ptr(idx[static_cast<size_t>(i)]);
        double* dst = val.row_ptr(i);
        for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    Var out = x.tape->output(std::move(val), x.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, idxid = x.id;
        auto ish = std::make_shared<std::vector<int64_t>>(std::move(idx));
        out.tape->set_backward(out, [oid, idxid, ish, k, d](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            Tensor& gx = t.grad_of(idxid);
            for (int64_t i = 0; i < k; ++i) {
                double* dst = gx.row_ptr((*ish)[static_cast<size_t>(i)]);
                const double* src = g.row_ptr(i);
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

inline Var row(Var x, int64_t i) { return gather_rows(x, {i}); }

// feature-wise concatenation of rank-2 tensors with equal row counts
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int64_t n = parts[0].val().dim(0);
    int64_t total = 0;
    bool rg = false;
    for (const Var& p : parts) {
        if (p.val().rank() != 2 || p.val().dim(0) != n)
            throw std::invalid_argument("concat_cols: row counts disagree");
        total += p.val().dim(1);
        rg = rg || p.requires_grad();
    }
    Tensor val({n, total});
    int64_t off = 0;
    for (const Var& p : parts) {
        const Tensor& P = p.val();
        int64_t d = P.dim(1);
        for (int64_t i = 0; i < n; ++i) {
            const double* src = P.row_ptr(i);
            double* dst = val.row_ptr(i) + off;
            for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
        }
        off += d;
    }
    Var out = parts[0].tape->output(std::move(val), rg);
    if (rg) {
        int32_t oid = out.id;
        std::vector<int32_t> pids;
        std::vector<int64_t> widths;
        for (const Var& p : parts) {
            pids.push_back(p.id);
            widths.push_back(p.val().dim(1));
        }
        out.tape->set_backward(out, [oid, pids, widths, n, total](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            int64_t off = 0;
            for (size_t pi = 0; pi < pids.size(); ++pi) {
                int64_t d = widths[pi];
                if (t.node(pids[pi]).requires_grad) {
                    Tensor& gp = t.grad_of(pids[pi]);
                    for (int64_t i = 0; i < n; ++i) {
                        const double* src = g.row_ptr(i) + off;
                        double* dst = gp.row_ptr(i);
                        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                    }
                }
                off += d;
            }
        });
    }
    return out;
}

inline Var concat_cols(Var a, Var b) { return concat_cols(std::vector<Var>{a, b}); }

// zeroes rows where keep[i] == 0
inline Var mask_rows(Var x, std::vector<uint8_t> keep) {
    const Tensor& X = x.val();
    if (X.rank() != 2 || static_cast<int64_t>(keep.size()) != X.dim(0))
        throw std::invalid_argument("mask_rows: mask length must equal row count");
    int64_t n = X.dim(0), d = X.dim(1);
    Tensor val = X;
    for (int64_t i = 0; i < n; ++i)
        if (!keep[static_cast<size_t>(i)]) {
            double* r = val.row_ptr(i);
            for (int64_t j = 0; j < d; ++j) r[j] = 0.0;
        }
    Var out = x.tape->output(std::move(val), x.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, idx = x.id;
        auto ksh = std::make_shared<std::vector<uint8_t>>(std::move(keep));
        out.tape->set_backward(out, [oid, idx, ksh, n, d](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            Tensor& gx = t.grad_of(idx);
            for (int64_t i = 0; i < n; ++i) {
                if (!(*ksh)[static_cast<size_t>(i)]) continue;
                const double* src = g.row_ptr(i);
                double* dst = gx.row_ptr(i);
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// scalar sum of all entries
inline Var sum(Var x) {
    double s = 0.0;
    for (double v : x.val().data) s += v;
    Var out = x.tape->output(Tensor::scalar(s), x.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, idx = x.id;
        out.tape->set_backward(out, [oid, idx](Tape& t) {
            double g = t.grad_of(oid).data[0];
            Tensor& gx = t.grad_of(idx);
            for (auto& v : gx.data) v += g;
        });
    }
    return out;
}

// mean cross-entropy of rows of logits against integer targets
inline Var softmax_cross_entropy_mean(Var logits, std::vector<int64_t> targets) {
    const Tensor& L = logits.val();
    if (L.rank() != 2) throw std::invalid_argument("cross_entropy: rank-2 logits required");
    int64_t n = L.dim(0), c = L.dim(1);
    if (static_cast<int64_t>(targets.size()) != n)
        throw std::invalid_argument("cross_entropy: target count mismatch");
    for (int64_t t : targets)
        if (t < 0 || t >= c) throw std::invalid_argument("cross_entropy: target out of range");
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* li = L.row_ptr(i);
        double mx = li[0];
        for (int64_t j = 1; j < c; ++j)
            if (li[j] > mx) mx = li[j];
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) z += std::exp(li[j] - mx);
        loss += std::log(z) + mx - li[targets[static_cast<size_t>(i)]];
    }
    loss /= static_cast<double>(n);
    Var out = logits.tape->output(Tensor::scalar(loss), logits.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, idl = logits.id;
        auto tsh = std::make_shared<std::vector<int64_t>>(std::move(targets));
        out.tape->set_backward(out, [oid, idl, tsh, n, c](Tape& t) {
            double g = t.grad_of(oid).data[0] / static_cast<double>(n);
            const Tensor& L = t.val_of(idl);
            Tensor& gl = t.grad_of(idl);
            for (int64_t i = 0; i < n; ++i) {
                const double* li = L.row_ptr(i);
                double* gi = gl.row_ptr(i);
                double mx = li[0];
                for (int64_t j = 1; j < c; ++j)
                    if (li[j] > mx) mx = li[j];
                double z = 0.0;
                for (int64_t j = 0; j < c; ++j) z += std::exp(li[j] - mx);
                double invz = 1.0 / z;
                for (int64_t j = 0; j < c; ++j) gi[j] += g * std::exp(li[j] - mx) * invz;
                gi[(*tsh)[static_cast<size_t>(i)]] -= g;
            }
        });
    }
    return out;
}

// inverted-dropout; identity when p == 0
inline Var dropout(Var x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const Tensor& X = x.val();
    auto keep = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(X.numel()));
    double inv = 1.0 / (1.0 - p);
    Tensor val = X;
    for (int64_t i = 0; i < X.numel(); ++i) {
        bool k = rng.next_double() >= p;
        (*keep)[static_cast<size_t>(i)] = k;
        val.at(i) = k ? X.at(i) * inv : 0.0;
    }
    Var out = x.tape->output(std::move(val), x.requires_grad());
    if (out.requires_grad()) {
        int32_t oid = out.id, idx = x.id;
        out.tape->set_backward(out, [oid, idx, keep, inv](Tape& t) {
            const Tensor& g = t.grad_of(oid);
            Tensor& gx = t.grad_of(idx);
            for (int64_t i = 0; i < g.numel(); ++i)
                if ((*keep)[static_cast<size_t>(i)]) gx.at(i) += g.at(i) * inv;
        });
    }
    return out;
}

}  // namespace canine
