#include "lvg/flow.hpp"

#include <cmath>

namespace lvg {

NoiseSchedule NoiseSchedule::uniform(int T) {
    if (T < 1) throw ConfigError("NoiseSchedule: step count must be >= 1");
    NoiseSchedule s;
    s.steps.reserve(T);
    for (int j = T; j >= 1; --j) s.steps.push_back(double(j) / double(T));
    return s;
}

void NoiseSchedule::validate() const {
    if (steps.empty()) throw ConfigError("NoiseSchedule: empty");
    double prev = 1.0 + 1e-12;
    for (double t : steps) {
        if (!(t > 0.0 && t <= 1.0)) throw ConfigError("NoiseSchedule: step outside (0,1]");
        if (!(t < prev)) throw ConfigError("NoiseSchedule: steps must strictly decrease");
        prev = t;
    }
}

LatentGrid flow_forward(const LatentGrid& x0, const LatentGrid& eps, double t) {
    if (!x0.same_shape(eps)) throw DataError("flow_forward: shape mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw DataError("flow_forward: t outside [0,1]");
    LatentGrid out = x0;
    float tf = float(t), cf = float(1.0 - t);
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = cf * x0.values[i] + tf * eps.values[i];
    return out;
}

LatentGrid x0_from_velocity(const LatentGrid& xt, const LatentGrid& v, double t) {
    if (!xt.same_shape(v)) throw DataError("x0_from_velocity: shape mismatch");
    LatentGrid out = xt;
    float tf = float(t);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = xt.values[i] - tf * v.values[i];
    return out;
}

std::pair<LatentGrid, SampleStats> sample(const VelocityFn& velocity, const LatentGrid& shape_ref,
                                          const SamplerConfig& config) {
    config.schedule.validate();
    if (!std::isfinite(config.cfg_weight) || config.cfg_weight < 0.0)
        throw ConfigError("sample: bad cfg weight");

    Rng rng(config.seed);
    LatentGrid x = noise_like(shape_ref, rng);
    SampleStats stats;
    double w = config.cfg_weight;
    const auto& steps = config.schedule.steps;
    for (size_t j = 0; j < steps.size(); ++j) {
        double tj = steps[j];
        double tnext = (j + 1 < steps.size()) ? steps[j + 1] : 0.0;
        LatentGrid v;
        if (w == 1.0) {
            v = velocity(x, tj, true);
            ++stats.cond_evals;
        } else {
            LatentGrid vc = velocity(x, tj, true);
            ++stats.cond_evals;
            LatentGrid vu = velocity(x, tj, false);
            ++stats.uncond_evals;
            v = vu;
            float wf = float(w);
            for (size_t i = 0; i < v.values.size(); ++i)
                v.values[i] += wf * (vc.values[i] - vu.values[i]);
        }
        if (!v.same_shape(x)) throw DataError("sample: velocity shape mismatch");
        float dt = float(tj - tnext);
        for (size_t i = 0; i < x.values.size(); ++i) x.values[i] -= dt * v.values[i];
        if (!all_finite(x.values))
            throw NumericalError("sample: non-finite state at step " + std::to_string(j));
    }
    return {std::move(x), stats};
}

}  // namespace lvg
