#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <mutex>
#include <vector>

#if defined(__GLIBC__) || __has_include(<malloc.h>)
#include <malloc.h>
#endif

#include "lvg/tensor.hpp"

namespace lvg {

// Tapes hold hundreds of MB of short-lived score matrices. glibc serves
// blocks that large via mmap/munmap, which page-faults on every forward;
// raising the thresholds keeps them on the reusable heap (~40% faster).
inline void tune_allocator_once() {
#ifdef M_MMAP_THRESHOLD
    static std::once_flag flag;
    std::call_once(flag, [] {
        mallopt(M_MMAP_THRESHOLD, 256 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
    });
#endif
}

// Reverse-mode tape. Every op appends a node holding the forward value and a
// closure that scatters the node's gradient into its inputs. Parameter leaves
// carry an external gradient sink so optimizer state lives outside the tape.
template <typename T>
class Tape {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::function<void(Tape&, int)> backward;
        Tensor<T>* sink = nullptr;
        bool requires_grad = false;
    };

    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
        tune_allocator_once();
    }

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return nodes_.size(); }
    void reset() { nodes_.clear(); }

    const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
    const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }
    Tensor<T>& grad_mut(Var v) { return nodes_[v.id].grad; }

    Var constant(Tensor<T> t) {
        return push(std::move(t), false, nullptr, nullptr);
    }

    // Leaf bound to a parameter; gradients accumulate into *grad_sink.
    Var param(const Tensor<T>& value, Tensor<T>* grad_sink) {
        if (!grad_enabled_) return push(Tensor<T>(value), false, nullptr, nullptr);
        return push(Tensor<T>(value), true, nullptr, grad_sink);
    }

    // Leaf that participates in backward but has no sink (read grad off the
    // tape afterwards). Used to differentiate w.r.t. an input.
    Var input(Tensor<T> t) {
        if (!grad_enabled_) return push(std::move(t), false, nullptr, nullptr);
        return push(std::move(t), true, nullptr, nullptr);
    }

    Var matmul(Var a, Var b) {
        Tensor<T> out = lvg::matmul(value(a), value(b));
        return push(std::move(out), needs(a) || needs(b),
                    [a, b](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        if (tp.needs(a))
                            tp.grad_mut(a).map().noalias() +=
                                g.map() * tp.value(b).map().transpose();
                        if (tp.needs(b))
                            tp.grad_mut(b).map().noalias() +=
                                tp.value(a).map().transpose() * g.map();
                    });
    }

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        Tensor<T> out = value(a);
        out.map() += value(b).map();
        return push(std::move(out), needs(a) || needs(b),
                    [a, b](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        if (tp.needs(a)) tp.grad_mut(a).map() += g.map();
                        if (tp.needs(b)) tp.grad_mut(b).map() += g.map();
                    });
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        Tensor<T> out = value(a);
        out.map() -= value(b).map();
        return push(std::move(out), needs(a) || needs(b),
                    [a, b](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        if (tp.needs(a)) tp.grad_mut(a).map() += g.map();
                        if (tp.needs(b)) tp.grad_mut(b).map() -= g.map();
                    });
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        Tensor<T> out = value(a);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= value(b).data[i];
        return push(std::move(out), needs(a) || needs(b),
                    [a, b](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        if (tp.needs(a)) {
                            auto& ga = tp.grad_mut(a);
                            const auto& vb = tp.value(b);
                            for (size_t i = 0; i < g.data.size(); ++i)
                                ga.data[i] += g.data[i] * vb.data[i];
                        }
                        if (tp.needs(b)) {
                            auto& gb = tp.grad_mut(b);
                            const auto& va = tp.value(a);
                            for (size_t i = 0; i < g.data.size(); ++i)
                                gb.data[i] += g.data[i] * va.data[i];
                        }
                    });
    }

    Var scale(Var a, T c) {
        Tensor<T> out = value(a);
        out.map() *= c;
        return push(std::move(out), needs(a),
                    [a, c](Tape& tp, int id) {
                        if (tp.needs(a)) tp.grad_mut(a).map() += c * tp.nodes_[id].grad.map();
                    });
    }

    // a[m x n] + row[1 x n] broadcast over rows
    Var add_row(Var a, Var row) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vr = value(row);
        if (vr.rows != 1 || vr.cols != va.cols) throw DataError("add_row: shape mismatch");
        Tensor<T> out = va;
        out.map().rowwise() += vr.map().row(0);
        return push(std::move(out), needs(a) || needs(row),
                    [a, row](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        if (tp.needs(a)) tp.grad_mut(a).map() += g.map();
                        if (tp.needs(row)) {
                            auto& gr = tp.grad_mut(row);
                            for (int r = 0; r < g.rows; ++r)
                                for (int c = 0; c < g.cols; ++c) gr.at(0, c) += g.at(r, c);
                        }
                    });
    }

    Var slice_cols(Var a, int c0, int c1) {
        const Tensor<T>& va = value(a);
        if (c0 < 0 || c1 > va.cols || c0 >= c1) throw DataError("slice_cols: bad range");
        Tensor<T> out = Tensor<T>::uninit(va.rows, c1 - c0);
        for (int r = 0; r < va.rows; ++r)
            std::memcpy(out.data.data() + size_t(r) * out.cols,
                        va.data.data() + size_t(r) * va.cols + c0, sizeof(T) * size_t(out.cols));
        return push(std::move(out), needs(a),
                    [a, c0](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        auto& ga = tp.grad_mut(a);
                        for (int r = 0; r < g.rows; ++r)
                            for (int c = 0; c < g.cols; ++c) ga.at(r, c0 + c) += g.at(r, c);
                    });
    }

    Var slice_rows(Var a, int r0, int r1) {
        const Tensor<T>& va = value(a);
        if (r0 < 0 || r1 > va.rows || r0 >= r1) throw DataError("slice_rows: bad range");
        Tensor<T> out = Tensor<T>::uninit(r1 - r0, va.cols);
        std::memcpy(out.data.data(), va.data.data() + size_t(r0) * va.cols,
                    sizeof(T) * out.data.size());
        return push(std::move(out), needs(a),
                    [a, r0](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        auto& ga = tp.grad_mut(a);
                        for (int r = 0; r < g.rows; ++r)
                            for (int c = 0; c < g.cols; ++c) ga.at(r0 + r, c) += g.at(r, c);
                    });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw DataError("concat_cols: empty");
        int rows = value(parts[0]).rows;
        int cols = 0;
        bool any = false;
        for (Var p : parts) {
            if (value(p).rows != rows) throw DataError("concat_cols: row mismatch");
            cols += value(p).cols;
            any = any || needs(p);
        }
        Tensor<T> out = Tensor<T>::uninit(rows, cols);
        int off = 0;
        for (Var p : parts) {
            const Tensor<T>& v = value(p);
            for (int r = 0; r < rows; ++r)
                std::memcpy(out.data.data() + size_t(r) * cols + off,
                            v.data.data() + size_t(r) * v.cols, sizeof(T) * size_t(v.cols));
            off += v.cols;
        }
        return push(std::move(out), any,
                    [parts](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        int off = 0;
                        for (Var p : parts) {
                            int w = tp.value(p).cols;
                            if (tp.needs(p)) {
                                auto& gp = tp.grad_mut(p);
                                for (int r = 0; r < g.rows; ++r)
                                    for (int c = 0; c < w; ++c) gp.at(r, c) += g.at(r, off + c);
                            }
                            off += w;
                        }
                    });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        if (parts.empty()) throw DataError("concat_rows: empty");
        int cols = value(parts[0]).cols;
        int rows = 0;
        bool any = false;
        for (Var p : parts) {
            if (value(p).cols != cols) throw DataError("concat_rows: col mismatch");
            rows += value(p).rows;
            any = any || needs(p);
        }
        Tensor<T> out = Tensor<T>::uninit(rows, cols);
        int off = 0;
        for (Var p : parts) {
            const Tensor<T>& v = value(p);
            std::memcpy(out.data.data() + size_t(off) * cols, v.data.data(),
                        sizeof(T) * v.data.size());
            off += v.rows;
        }
        return push(std::move(out), any,
                    [parts](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        int off = 0;
                        for (Var p : parts) {
                            int h = tp.value(p).rows;
                            if (tp.needs(p)) {
                                auto& gp = tp.grad_mut(p);
                                for (int r = 0; r < h; ++r)
                                    for (int c = 0; c < g.cols; ++c)
                                        gp.at(r, c) += g.at(off + r, c);
                            }
                            off += h;
                        }
                    });
    }

    Var transpose(Var a) {
        Tensor<T> out = transposed(value(a));
        return push(std::move(out), needs(a),
                    [a](Tape& tp, int id) {
                        if (tp.needs(a))
                            tp.grad_mut(a).map() += tp.nodes_[id].grad.map().transpose();
                    });
    }

    // c * (a @ b^T); the attention-score shape [m x k] @ [n x k]^T -> [m x n].
    Var matmul_nt_scaled(Var a, Var b, T c) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vb = value(b);
        if (va.cols != vb.cols) throw DataError("matmul_nt_scaled: inner dimensions differ");
        Tensor<T> out = Tensor<T>::uninit(va.rows, vb.rows);
        out.map().noalias() = c * (va.map() * vb.map().transpose());
        return push(std::move(out), needs(a) || needs(b),
                    [a, b, c](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        if (tp.needs(a))
                            tp.grad_mut(a).map().noalias() += c * (g.map() * tp.value(b).map());
                        if (tp.needs(b))
                            tp.grad_mut(b).map().noalias() +=
                                c * (g.map().transpose() * tp.value(a).map());
                    });
    }

    // Row gather from an embedding table; backward scatter-adds.
    Var gather_rows(Var table, std::vector<int> idx) {
        const Tensor<T>& vt = value(table);
        Tensor<T> out = Tensor<T>::uninit(int(idx.size()), vt.cols);
        for (size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0 || idx[r] >= vt.rows) throw DataError("gather_rows: index out of range");
            std::memcpy(out.data.data() + r * size_t(vt.cols),
                        vt.data.data() + size_t(idx[r]) * vt.cols, sizeof(T) * size_t(vt.cols));
        }
        return push(std::move(out), needs(table),
                    [table, idx = std::move(idx)](Tape& tp, int id) {
                        if (!tp.needs(table)) return;
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        auto& gt = tp.grad_mut(table);
                        for (size_t r = 0; r < idx.size(); ++r)
                            for (int c = 0; c < g.cols; ++c) gt.at(idx[r], c) += g.at(int(r), c);
                    });
    }

    // tanh-form gelu; vectorized, exact analytic backward for the same form.
    Var gelu(Var a) {
        const T k0 = T(0.7978845608028654);  // sqrt(2/pi)
        const T k1 = T(0.044715);
        Tensor<T> out = value(a);
        {
            auto x = out.map().array();
            out.map().array() = T(0.5) * x * (T(1) + (k0 * (x + k1 * x.cube())).tanh());
        }
        return push(std::move(out), needs(a),
                    [a, k0, k1](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        const Tensor<T>& va = tp.value(a);
                        auto x = va.map().array();
                        auto u = (k0 * (x + k1 * x.cube())).tanh();
                        tp.grad_mut(a).map().array() +=
                            g.map().array() *
                            (T(0.5) * (T(1) + u) +
                             T(0.5) * x * (T(1) - u.square()) * k0 * (T(1) + T(3) * k1 * x.square()));
                    });
    }

    Var softmax_rows(Var a) {
        // Row-at-a-time on the contiguous row-major storage; the colwise
        // broadcast form defeats vectorization here.
        Tensor<T> out = value(a);
        for (int r = 0; r < out.rows; ++r) {
            Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> row(
                out.data.data() + size_t(r) * out.cols, out.cols);
            T mx = row.maxCoeff();
            row = (row - mx).exp();
            row /= row.sum();
        }
        return push(std::move(out), needs(a),
                    [a](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        const Tensor<T>& y = tp.nodes_[id].value;
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        Tensor<T>& ga = tp.grad_mut(a);
                        const int n = y.cols;
                        for (int r = 0; r < y.rows; ++r) {
                            using RowA = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
                            RowA yr(y.data.data() + size_t(r) * n, n);
                            RowA gr(g.data.data() + size_t(r) * n, n);
                            Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>> gar(
                                ga.data.data() + size_t(r) * n, n);
                            T acc = (gr * yr).sum();
                            gar += yr * (gr - acc);
                        }
                    });
    }

    // Per-row layer norm with affine parameters: gamma, beta are 1 x n.
    Var layer_norm(Var a, Var gamma, Var beta, T eps = T(1e-5)) {
        const Tensor<T>& va = value(a);
        const Tensor<T>& vg = value(gamma);
        const Tensor<T>& vb = value(beta);
        if (vg.rows != 1 || vg.cols != va.cols || vb.rows != 1 || vb.cols != va.cols)
            throw DataError("layer_norm: affine shape mismatch");
        int n = va.cols;
        Tensor<T> out = Tensor<T>::uninit(va.rows, n);
        Tensor<T> xhat = Tensor<T>::uninit(va.rows, n);
        std::vector<T> inv_std(va.rows);
        using RowA = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
        using RowM = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
        RowA gr(vg.data.data(), n), br(vb.data.data(), n);
        for (int r = 0; r < va.rows; ++r) {
            RowA x(va.data.data() + size_t(r) * n, n);
            RowM xh(xhat.data.data() + size_t(r) * n, n);
            RowM y(out.data.data() + size_t(r) * n, n);
            T mean = x.mean();
            T var = (x - mean).square().sum() / T(n);
            T is = T(1) / std::sqrt(var + eps);
            inv_std[r] = is;
            xh = (x - mean) * is;
            y = xh * gr + br;
        }
        bool rq = needs(a) || needs(gamma) || needs(beta);
        return push(std::move(out), rq,
                    [a, gamma, beta, xhat = std::move(xhat),
                     inv_std = std::move(inv_std)](Tape& tp, int id) {
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        const Tensor<T>& vg = tp.value(gamma);
                        int n = g.cols;
                        if (tp.needs(gamma)) {
                            auto& gg = tp.grad_mut(gamma);
                            for (int r = 0; r < g.rows; ++r)
                                for (int c = 0; c < n; ++c)
                                    gg.at(0, c) += g.at(r, c) * xhat.at(r, c);
                        }
                        if (tp.needs(beta)) {
                            auto& gb = tp.grad_mut(beta);
                            for (int r = 0; r < g.rows; ++r)
                                for (int c = 0; c < n; ++c) gb.at(0, c) += g.at(r, c);
                        }
                        if (tp.needs(a)) {
                            auto& ga = tp.grad_mut(a);
                            for (int r = 0; r < g.rows; ++r) {
                                T sum_gy = 0, sum_gy_xh = 0;
                                for (int c = 0; c < n; ++c) {
                                    T gy = g.at(r, c) * vg.at(0, c);
                                    sum_gy += gy;
                                    sum_gy_xh += gy * xhat.at(r, c);
                                }
                                for (int c = 0; c < n; ++c) {
                                    T gy = g.at(r, c) * vg.at(0, c);
                                    ga.at(r, c) += inv_std[r] *
                                                   (gy - (sum_gy + xhat.at(r, c) * sum_gy_xh) / T(n));
                                }
                            }
                        }
                    });
    }

    // Pairwise rotation: columns (2k, 2k+1) rotated by angle table[row][k].
    // cs/sn are [rows x cols/2] precomputed tables (constants, not vars).
    Var rotate_pairs(Var a, const Tensor<T>& cs, const Tensor<T>& sn) {
        const Tensor<T>& va = value(a);
        if (va.cols % 2 != 0) throw DataError("rotate_pairs: odd column count");
        if (cs.rows != va.rows || cs.cols != va.cols / 2 || !cs.same_shape(sn))
            throw DataError("rotate_pairs: table shape mismatch");
        Tensor<T> out = Tensor<T>::uninit(va.rows, va.cols);
        for (int r = 0; r < va.rows; ++r)
            for (int k = 0; k < va.cols / 2; ++k) {
                T x0 = va.at(r, 2 * k), x1 = va.at(r, 2 * k + 1);
                T c = cs.at(r, k), s = sn.at(r, k);
                out.at(r, 2 * k) = x0 * c - x1 * s;
                out.at(r, 2 * k + 1) = x0 * s + x1 * c;
            }
        return push(std::move(out), needs(a),
                    [a, cs, sn](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        const Tensor<T>& g = tp.nodes_[id].grad;
                        auto& ga = tp.grad_mut(a);
                        for (int r = 0; r < g.rows; ++r)
                            for (int k = 0; k < g.cols / 2; ++k) {
                                T g0 = g.at(r, 2 * k), g1 = g.at(r, 2 * k + 1);
                                T c = cs.at(r, k), s = sn.at(r, k);
                                ga.at(r, 2 * k) += g0 * c + g1 * s;
                                ga.at(r, 2 * k + 1) += -g0 * s + g1 * c;
                            }
                    });
    }

    // mean((a - target)^2) over all entries; target is a constant tensor.
    Var mse_const(Var a, const Tensor<T>& target) {
        const Tensor<T>& va = value(a);
        if (!va.same_shape(target)) throw DataError("mse_const: shape mismatch");
        T acc = 0;
        for (size_t i = 0; i < va.data.size(); ++i) {
            T d = va.data[i] - target.data[i];
            acc += d * d;
        }
        T inv_n = T(1) / T(va.data.size());
        Tensor<T> out = Tensor<T>::scalar(acc * inv_n);
        return push(std::move(out), needs(a),
                    [a, target, inv_n](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        T g = tp.nodes_[id].grad.data[0];
                        const Tensor<T>& va = tp.value(a);
                        auto& ga = tp.grad_mut(a);
                        for (size_t i = 0; i < va.data.size(); ++i)
                            ga.data[i] += g * T(2) * inv_n * (va.data[i] - target.data[i]);
                    });
    }

    // sum(a * coeff) with coeff constant; the DMD injection hook.
    Var inner_const(Var a, const Tensor<T>& coeff) {
        const Tensor<T>& va = value(a);
        if (!va.same_shape(coeff)) throw DataError("inner_const: shape mismatch");
        T acc = 0;
        for (size_t i = 0; i < va.data.size(); ++i) acc += va.data[i] * coeff.data[i];
        Tensor<T> out = Tensor<T>::scalar(acc);
        return push(std::move(out), needs(a),
                    [a, coeff](Tape& tp, int id) {
                        if (!tp.needs(a)) return;
                        T g = tp.nodes_[id].grad.data[0];
                        auto& ga = tp.grad_mut(a);
                        for (size_t i = 0; i < coeff.data.size(); ++i)
                            ga.data[i] += g * coeff.data[i];
                    });
    }

    // Seed d(out)/d(out) = 1 and sweep the tape in reverse. `out` must be 1x1.
    void backward(Var out) {
        if (!grad_enabled_) throw NumericalError("backward: tape built with gradients disabled");
        const Tensor<T>& v = value(out);
        if (v.rows != 1 || v.cols != 1) throw DataError("backward: output must be scalar");
        if (!needs(out)) return;
        nodes_[out.id].grad.data[0] = T(1);
        for (int i = out.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.requires_grad) continue;
            if (n.backward) n.backward(*this, i);
            if (n.sink) {
                if (!n.sink->same_shape(n.grad)) throw DataError("backward: sink shape mismatch");
                n.sink->map() += n.grad.map();
            }
        }
    }

    bool needs(Var v) const { return nodes_[v.id].requires_grad; }

private:
    void check_same(Var a, Var b, const char* op) const {
        if (!value(a).same_shape(value(b)))
            throw DataError(std::string(op) + ": shape mismatch");
    }

    Var push(Tensor<T> value, bool requires_grad, std::function<void(Tape&, int)> backward,
             Tensor<T>* sink = nullptr) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = grad_enabled_ && requires_grad;
        if (n.requires_grad) {
            n.grad = Tensor<T>(n.value.rows, n.value.cols);
            n.backward = std::move(backward);
            n.sink = sink;
        }
        nodes_.push_back(std::move(n));
        return Var{int(nodes_.size()) - 1};
    }

    // Skips the std::function allocation entirely on grad-free tapes.
    template <typename F>
    Var push(Tensor<T> value, bool requires_grad, F&& backward) {
        if (!grad_enabled_ || !requires_grad)
            return push(std::move(value), false, nullptr, nullptr);
        return push(std::move(value), true,
                    std::function<void(Tape&, int)>(std::forward<F>(backward)), nullptr);
    }

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

}  // namespace lvg
