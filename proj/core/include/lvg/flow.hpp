#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "lvg/latent.hpp"
#include "lvg/model.hpp"

namespace lvg {

// Denoising times t_T > ... > t_1 in (0,1]; the terminal time 0 is implicit.
struct NoiseSchedule {
    std::vector<double> steps;

    static NoiseSchedule uniform(int T);
    void validate() const;
    int length() const { return int(steps.size()); }
};

struct SamplerConfig {
    double cfg_weight = 3.0;
    NoiseSchedule schedule = NoiseSchedule::uniform(50);
    uint64_t seed = 0;
};

struct SampleStats {
    int cond_evals = 0;
    int uncond_evals = 0;
    int total() const { return cond_evals + uncond_evals; }
};

// x(t) = (1-t) x0 + t eps. Also the re-noising map used by self-rollout.
LatentGrid flow_forward(const LatentGrid& x0, const LatentGrid& eps, double t);

// Denoised endpoint implied by a velocity prediction: x0_hat = x_t - t v.
LatentGrid x0_from_velocity(const LatentGrid& xt, const LatentGrid& v, double t);

// Velocity field abstraction: (x_t, t, conditional?) -> v. Lets the sampler
// and the distillation gradient run against closed-form test oracles.
using VelocityFn = std::function<LatentGrid(const LatentGrid&, double, bool)>;

template <typename T>
VelocityFn model_velocity(Model<T>& model, const LatentGrid& s, const LatentGrid& o,
                          const ConditionEmbedding& c) {
    const ConditionEmbedding* cond = &c;
    return [&model, &s, &o, cond](const LatentGrid& x, double t, bool conditional) {
        if (conditional) return forward(model, x, s, o, *cond, t);
        return forward(model, x, s, o, ConditionEmbedding::null_condition(), t);
    };
}

// Euler integration from t_T to 0 with classifier-free guidance
// v = v_u + w (v_c - v_u); w == 1 evaluates the conditional branch alone.
std::pair<LatentGrid, SampleStats> sample(const VelocityFn& velocity, const LatentGrid& shape_ref,
                                          const SamplerConfig& config);

template <typename T>
std::pair<LatentGrid, SampleStats> sample_model(Model<T>& model, const LatentGrid& s,
                                                const LatentGrid& o, const ConditionEmbedding& c,
                                                const SamplerConfig& config) {
    return sample(model_velocity(model, s, o, c), s, config);
}

// One conditioned training sample: target x0 with its (s, o, c) context.
struct TrainSample {
    LatentGrid x0;
    LatentGrid s;
    LatentGrid o;
    ConditionEmbedding c;
};

inline constexpr double kCondDropRate = 0.1;

// Flow-matching loss over a batch. Per-sample rng draw order is fixed:
// t = rng.uniform(), then eps = noise_like(x0, rng), then the condition-drop
// uniform. with_grad accumulates parameter gradients (mean over the batch).
template <typename T>
double fm_loss(Model<T>& model, const std::vector<const TrainSample*>& batch, Rng& rng,
               double p_drop = kCondDropRate, bool with_grad = true,
               size_t* drop_count = nullptr) {
    if (batch.empty()) throw DataError("fm_loss: empty batch");
    double total = 0;
    for (const TrainSample* item : batch) {
        if (!item) throw DataError("fm_loss: null batch item");
        double t = rng.uniform();
        LatentGrid eps = noise_like(item->x0, rng);
        bool drop = rng.uniform() < p_drop;
        if (drop && drop_count) ++*drop_count;
        const ConditionEmbedding cond =
            drop ? ConditionEmbedding::null_condition() : item->c;
        LatentGrid xt = flow_forward(item->x0, eps, t);
        LatentGrid target = lat_sub(eps, item->x0);

        Tape<T> tape(with_grad);
        auto pred = model_forward(tape, model, xt, item->s, item->o, cond, t);
        Tensor<T> target_t(target.cell_count(), target.d);
        for (size_t i = 0; i < target.values.size(); ++i) target_t.data[i] = T(target.values[i]);
        auto loss = tape.mse_const(pred, target_t);
        double value = double(tape.value(loss).data[0]);
        if (!std::isfinite(value)) throw NumericalError("fm_loss: non-finite loss");
        if (with_grad) {
            auto scaled = tape.scale(loss, T(1.0 / double(batch.size())));
            tape.backward(scaled);
        }
        total += value;
    }
    return total / double(batch.size());
}

// Unconditional-context variant: s and o fed as zero latents.
template <typename T>
double fm_loss_uncond(Model<T>& model,
                      const std::vector<std::pair<const LatentGrid*, const ConditionEmbedding*>>& batch,
                      Rng& rng, double p_drop = kCondDropRate, bool with_grad = true) {
    if (batch.empty()) throw DataError("fm_loss_uncond: empty batch");
    std::vector<TrainSample> storage;
    storage.reserve(batch.size());
    for (const auto& [x0, c] : batch) {
        if (!x0 || !c) throw DataError("fm_loss_uncond: null batch item");
        TrainSample ts;
        ts.x0 = *x0;
        ts.s = zeros_like(*x0);
        ts.o = zeros_like(*x0);
        ts.c = *c;
        storage.push_back(std::move(ts));
    }
    std::vector<const TrainSample*> ptrs;
    for (const auto& ts : storage) ptrs.push_back(&ts);
    return fm_loss(model, ptrs, rng, p_drop, with_grad);
}

}  // namespace lvg
