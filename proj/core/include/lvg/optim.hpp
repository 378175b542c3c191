#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "lvg/model.hpp"

namespace lvg {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with decoupled weight decay. Moment buffers are keyed by entry
// order, so one optimizer instance must stay with one parameter set.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(ModelParams<float>& params) {
        auto& entries = params.entries();
        if (m_.empty()) {
            for (const auto& e : entries) {
                m_.emplace_back(e.value.data.size(), 0.0);
                v_.emplace_back(e.value.data.size(), 0.0);
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (size_t i = 0; i < entries.size(); ++i) {
            auto& val = entries[i].value.data;
            auto& grd = entries[i].grad.data;
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t k = 0; k < val.size(); ++k) {
                const double g = grd[k];
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
                const double mh = m[k] / bc1;
                const double vh = v[k] / bc2;
                double x = val[k];
                x -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * x);
                val[k] = float(x);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// FNV-1a over the raw float bits of every parameter, for frozen-weight checks.
inline uint64_t param_checksum(const ModelParams<float>& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : params.entries())
        for (float f : e.value.data) {
            uint32_t bits;
            static_assert(sizeof bits == sizeof f);
            std::memcpy(&bits, &f, sizeof bits);
            for (int b = 0; b < 4; ++b) {
                h ^= (bits >> (8 * b)) & 0xffu;
                h *= 0x100000001b3ull;
            }
        }
    return h;
}

}  // namespace lvg
