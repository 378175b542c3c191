#pragma once

#include <array>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/latent.hpp"
#include "lvg/rope.hpp"
#include "lvg/text.hpp"

namespace lvg {

struct ModelConfig {
    int width = 64;       // D, model width
    int layers = 4;       // transformer blocks
    int heads = 4;        // attention heads
    int head_dim = 16;    // D_h
    int vocab = kVocabSize;
    int t_max = kMaxCondTokens;
    int cond_dim = kCondDim;
    int latent_channels = kLatentChannels;  // d

    void validate() const {
        if (width < 1 || layers < 1 || heads < 1 || head_dim < 1)
            throw ConfigError("ModelConfig: non-positive dimension");
        if (heads * head_dim != width) throw ConfigError("ModelConfig: heads*head_dim != width");
        if (head_dim % 8 != 0) throw ConfigError("ModelConfig: head_dim must be a multiple of 8");
        if (vocab < 1 || t_max < 1 || cond_dim < 1 || latent_channels < 1)
            throw ConfigError("ModelConfig: bad text/latent dims");
    }

    bool operator==(const ModelConfig&) const = default;
};

// Named parameter tensors with parallel gradient buffers.
template <typename T>
class ModelParams {
public:
    struct Entry {
        std::string name;
        Tensor<T> value;
        Tensor<T> grad;
    };

    Tensor<T>& add(const std::string& name, int rows, int cols) {
        if (index_.count(name)) throw DataError("ModelParams: duplicate " + name);
        index_[name] = int(entries_.size());
        entries_.push_back({name, Tensor<T>(rows, cols), Tensor<T>(rows, cols)});
        return entries_.back().value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& value(const std::string& name) { return entries_[find(name)].value; }
    const Tensor<T>& value(const std::string& name) const { return entries_[find(name)].value; }
    Tensor<T>& grad(const std::string& name) { return entries_[find(name)].grad; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(T(0));
    }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    void check_finite(const char* where) const {
        for (const auto& e : entries_)
            for (T v : e.value.data)
                if (!std::isfinite(double(v)))
                    throw NumericalError(std::string(where) + ": non-finite parameter " + e.name);
    }

private:
    int find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DataError("ModelParams: unknown " + name);
        return it->second;
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> index_;
};

template <typename T>
struct Model {
    ModelConfig config;
    ModelParams<T> params;
};

namespace detail {

inline std::string layer_key(int layer, const char* suffix) {
    return "layer" + std::to_string(layer) + "." + suffix;
}

}  // namespace detail

// Seed-deterministic initialization: Glorot-uniform weights, zero biases,
// unit layer-norm gains, zero output projection (initial velocity is zero).
template <typename T>
Model<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.config = cfg;
    Rng rng(splitmix64(seed ^ 0x9e3779b97f4a7c15ull));
    auto glorot = [&rng](Tensor<T>& w) {
        double a = std::sqrt(6.0 / double(w.rows + w.cols));
        for (T& v : w.data) v = T(rng.uniform(-a, a));
    };
    auto ones = [](Tensor<T>& w) { w.fill(T(1)); };

    auto& p = m.params;
    int D = cfg.width, d = cfg.latent_channels, H4 = 4 * cfg.width;
    glorot(p.add("in_proj.w", d, D));
    p.add("in_proj.b", 1, D);
    glorot(p.add("time.w1", D, D));
    p.add("time.b1", 1, D);
    glorot(p.add("time.w2", D, D));
    p.add("time.b2", 1, D);
    glorot(p.add("cond_proj.w", cfg.cond_dim, D));
    p.add("cond_proj.b", 1, D);
    auto& null_cond = p.add("null_cond", 1, cfg.cond_dim);
    for (T& v : null_cond.data) v = T(rng.normal() * 0.5);

    for (int i = 0; i < cfg.layers; ++i) {
        auto key = [i](const char* s) { return detail::layer_key(i, s); };
        ones(p.add(key("ln1.g"), 1, D));
        p.add(key("ln1.b"), 1, D);
        for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) glorot(p.add(key(w), D, D));
        for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) p.add(key(b), 1, D);
        ones(p.add(key("ln2.g"), 1, D));
        p.add(key("ln2.b"), 1, D);
        for (const char* w : {"cross.wq", "cross.wk", "cross.wv", "cross.wo"})
            glorot(p.add(key(w), D, D));
        for (const char* b : {"cross.bq", "cross.bk", "cross.bv", "cross.bo"}) p.add(key(b), 1, D);
        ones(p.add(key("ln3.g"), 1, D));
        p.add(key("ln3.b"), 1, D);
        glorot(p.add(key("ffn.w1"), D, H4));
        p.add(key("ffn.b1"), 1, H4);
        glorot(p.add(key("ffn.w2"), H4, D));
        p.add(key("ffn.b2"), 1, D);
    }
    ones(p.add("final_ln.g", 1, D));
    p.add("final_ln.b", 1, D);
    p.add("out_proj.w", D, d);
    p.add("out_proj.b", 1, d);
    return m;
}

// Sinusoidal timestep features over t scaled to [0, 1000].
template <typename T>
Tensor<T> timestep_features(double t, int dim) {
    Tensor<T> f(1, dim);
    int half = dim / 2;
    double pos = t * 1000.0;
    for (int i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -double(i) / double(half));
        f.at(0, i) = T(std::sin(pos * freq));
        f.at(0, half + i) = T(std::cos(pos * freq));
    }
    return f;
}

// Token positions for the [x | s | o] sequence over an (H,W,L) cell grid.
inline std::vector<TokenPosition> sequence_positions(int H, int W, int L) {
    std::vector<TokenPosition> pos;
    pos.reserve(size_t(3) * H * W * L);
    for (int f : {0, 0, 1})
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                for (int l = 0; l < L; ++l) pos.push_back({f, h, w, l});
    return pos;
}

namespace detail {

template <typename T>
Tensor<T> latent_rows(const LatentGrid& g) {
    Tensor<T> t(g.cell_count(), g.d);
    for (size_t i = 0; i < g.values.size(); ++i) t.data[i] = T(g.values[i]);
    return t;
}

// q/k/v: [n x D] activations, multi-head attention with optional rotary
// tables applied to q and k. kv may come from a different sequence (cross).
template <typename T>
typename Tape<T>::Var attention(Tape<T>& tape, typename Tape<T>::Var q,
                                typename Tape<T>::Var k, typename Tape<T>::Var v, int heads,
                                int head_dim, const Tensor<T>* cs_q, const Tensor<T>* sn_q,
                                const Tensor<T>* cs_k, const Tensor<T>* sn_k) {
    std::vector<typename Tape<T>::Var> outs;
    T scale = T(1) / T(std::sqrt(double(head_dim)));
    for (int h = 0; h < heads; ++h) {
        auto qh = tape.slice_cols(q, h * head_dim, (h + 1) * head_dim);
        auto kh = tape.slice_cols(k, h * head_dim, (h + 1) * head_dim);
        auto vh = tape.slice_cols(v, h * head_dim, (h + 1) * head_dim);
        if (cs_q) qh = tape.rotate_pairs(qh, *cs_q, *sn_q);
        if (cs_k) kh = tape.rotate_pairs(kh, *cs_k, *sn_k);
        auto scores = tape.matmul_nt_scaled(qh, kh, scale);
        auto att = tape.softmax_rows(scores);
        outs.push_back(tape.matmul(att, vh));
    }
    return tape.concat_cols(outs);
}

}  // namespace detail

// Velocity prediction over the x block: token sequence [x | s | o] with
// identity-aware rotary self-attention, per-layer cross-attention to the
// instruction embedding, timestep features added to every token.
template <typename T>
typename Tape<T>::Var model_forward(Tape<T>& tape, Model<T>& model, const LatentGrid& x,
                                    const LatentGrid& s, const LatentGrid& o,
                                    const ConditionEmbedding& c, double t) {
    const ModelConfig& cfg = model.config;
    if (!x.same_shape(s) || !x.same_shape(o)) throw DataError("forward: latent shape mismatch");
    if (x.d != cfg.latent_channels) throw DataError("forward: latent channel mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw DataError("forward: t outside [0,1]");
    for (const LatentGrid* g : {&x, &s, &o})
        if (!all_finite(g->values)) throw NumericalError("forward: non-finite input latent");
    if (!c.is_null && c.length() == 0) throw DataError("forward: empty condition");
    if (c.length() > cfg.t_max) throw DataError("forward: condition longer than t_max");

    auto& p = model.params;
    auto pv = [&](const std::string& name) { return tape.param(p.value(name), &p.grad(name)); };

    int N = x.cell_count();
    int D = cfg.width;

    // token stream
    auto xs = tape.constant(detail::latent_rows<T>(x));
    auto ss = tape.constant(detail::latent_rows<T>(s));
    auto os = tape.constant(detail::latent_rows<T>(o));
    auto tokens = tape.concat_rows({xs, ss, os});
    auto stream = tape.add_row(tape.matmul(tokens, pv("in_proj.w")), pv("in_proj.b"));

    // timestep pathway
    auto tfeat = tape.constant(timestep_features<T>(t, D));
    auto temb = tape.add_row(tape.matmul(tfeat, pv("time.w1")), pv("time.b1"));
    temb = tape.gelu(temb);
    temb = tape.add_row(tape.matmul(temb, pv("time.w2")), pv("time.b2"));
    stream = tape.add_row(stream, temb);

    // condition tokens -> model width
    typename Tape<T>::Var cond_in;
    if (c.is_null) {
        cond_in = pv("null_cond");
    } else {
        Tensor<T> ct(c.length(), cfg.cond_dim);
        for (int r = 0; r < c.length(); ++r) {
            if (int(c.tokens[r].size()) != cfg.cond_dim)
                throw DataError("forward: condition token width mismatch");
            for (int j = 0; j < cfg.cond_dim; ++j) ct.at(r, j) = T(c.tokens[r][j]);
        }
        cond_in = tape.constant(std::move(ct));
    }
    auto cond = tape.add_row(tape.matmul(cond_in, pv("cond_proj.w")), pv("cond_proj.b"));

    // rotary tables for the full sequence, cached per (shape, head_dim)
    static std::mutex rope_mu;
    static std::map<std::array<int, 4>, std::pair<Tensor<T>, Tensor<T>>> rope_cache;
    const Tensor<T>*cs_p, *sn_p;
    {
        std::lock_guard<std::mutex> lock(rope_mu);
        auto& slot = rope_cache[{x.H, x.W, x.L, cfg.head_dim}];
        if (slot.first.rows == 0)
            build_rope_tables(sequence_positions(x.H, x.W, x.L), cfg.head_dim, slot.first,
                              slot.second);
        cs_p = &slot.first;
        sn_p = &slot.second;
    }
    const Tensor<T>&cs = *cs_p, &sn = *sn_p;

    for (int i = 0; i < cfg.layers; ++i) {
        auto key = [i](const char* s2) { return detail::layer_key(i, s2); };
        auto lv = [&](const char* s2) { return pv(key(s2)); };

        auto h1 = tape.layer_norm(stream, lv("ln1.g"), lv("ln1.b"));
        auto q = tape.add_row(tape.matmul(h1, lv("attn.wq")), lv("attn.bq"));
        auto k = tape.add_row(tape.matmul(h1, lv("attn.wk")), lv("attn.bk"));
        auto v = tape.add_row(tape.matmul(h1, lv("attn.wv")), lv("attn.bv"));
        auto sa = detail::attention(tape, q, k, v, cfg.heads, cfg.head_dim, &cs, &sn, &cs, &sn);
        sa = tape.add_row(tape.matmul(sa, lv("attn.wo")), lv("attn.bo"));
        stream = tape.add(stream, sa);

        auto h2 = tape.layer_norm(stream, lv("ln2.g"), lv("ln2.b"));
        auto cq = tape.add_row(tape.matmul(h2, lv("cross.wq")), lv("cross.bq"));
        auto ck = tape.add_row(tape.matmul(cond, lv("cross.wk")), lv("cross.bk"));
        auto cv = tape.add_row(tape.matmul(cond, lv("cross.wv")), lv("cross.bv"));
        auto ca = detail::attention<T>(tape, cq, ck, cv, cfg.heads, cfg.head_dim, nullptr,
                                       nullptr, nullptr, nullptr);
        ca = tape.add_row(tape.matmul(ca, lv("cross.wo")), lv("cross.bo"));
        stream = tape.add(stream, ca);

        auto h3 = tape.layer_norm(stream, lv("ln3.g"), lv("ln3.b"));
        auto f1 = tape.add_row(tape.matmul(h3, lv("ffn.w1")), lv("ffn.b1"));
        f1 = tape.gelu(f1);
        auto f2 = tape.add_row(tape.matmul(f1, lv("ffn.w2")), lv("ffn.b2"));
        stream = tape.add(stream, f2);
    }

    auto hf = tape.layer_norm(stream, pv("final_ln.g"), pv("final_ln.b"));
    auto head = tape.slice_rows(hf, 0, N);
    return tape.add_row(tape.matmul(head, pv("out_proj.w")), pv("out_proj.b"));
}

// Plain inference forward on a private no-grad tape.
template <typename T>
LatentGrid forward(Model<T>& model, const LatentGrid& x, const LatentGrid& s, const LatentGrid& o,
                   const ConditionEmbedding& c, double t) {
    Tape<T> tape(false);
    auto out = model_forward(tape, model, x, s, o, c, t);
    const Tensor<T>& v = tape.value(out);
    LatentGrid result(x.H, x.W, x.L, x.d);
    for (size_t i = 0; i < result.values.size(); ++i) result.values[i] = float(v.data[i]);
    if (!all_finite(result.values)) throw NumericalError("forward: non-finite output");
    return result;
}

// Checkpoint stream: magic "LVGCKPT1", u32le version, length-prefixed
// key=value config block, then named tensors {u16 name len, name, u8 rank,
// u32le dims, f32le data} until end of stream.
void save_model(const std::string& path, const Model<float>& model);
Model<float> load_model(const std::string& path);
void write_model(std::ostream& out, const Model<float>& model);
Model<float> read_model(std::istream& in);

}  // namespace lvg
