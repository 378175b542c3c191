#include "lvg/train.hpp"

#include <algorithm>
#include <cmath>

#include "lvg/common.hpp"
#include "lvg/optim.hpp"

namespace lvg {

TrainStage stage_from_string(const std::string& name) {
    if (name == "base") return TrainStage::base;
    if (name == "teacher") return TrainStage::teacher;
    if (name == "edit") return TrainStage::edit;
    throw ConfigError("unknown training stage: " + name);
}

const char* stage_name(TrainStage stage) {
    switch (stage) {
        case TrainStage::base: return "base";
        case TrainStage::teacher: return "teacher";
        default: return "edit";
    }
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (!(lr > 0)) throw ConfigError("train: learning rate must be positive");
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ConfigError("train: drop rate outside [0,1]");
    model.validate();
}

namespace {

int class_index(const std::vector<std::string>& names, const std::string& cls) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == cls) return static_cast<int>(i);
    throw DataError("class missing from training cache: " + cls);
}

}  // namespace

TrainData prepare_training_data(const std::vector<SceneSpec>& specs, const Catalog& catalog,
                                const ModelConfig& mc) {
    if (specs.empty()) throw DataError("prepare_training_data: no scenes");
    TrainData data;
    const int res = specs.front().resolution;
    for (const auto& cls : catalog.classes) {
        data.class_names.push_back(cls.name);
        data.class_latents.push_back(encode(canonical_grid(cls, res)));
    }
    for (const auto& spec : specs) {
        if (spec.resolution != res)
            throw DataError("prepare_training_data: mixed scene resolutions");
        ScenePairs sp;
        const auto cum = cumulative_occupancies(spec, catalog);
        sp.states.reserve(cum.size());
        for (const auto& g : cum) sp.states.push_back(encode(g));
        for (const auto& o : spec.objects)
            sp.object_class.push_back(class_index(data.class_names, o.class_id));
        sp.c = embed_instruction(spec.instruction, mc.vocab, mc.t_max, mc.cond_dim);
        data.scenes.push_back(std::move(sp));
    }
    return data;
}

Model<float> train_stage(const TrainConfig& config, const TrainData& data,
                         const Model<float>* init, std::ostream* log) {
    config.validate();
    if (data.scenes.empty()) throw DataError("train_stage: no training data");
    if (config.stage != TrainStage::base && init == nullptr)
        throw ConfigError(std::string(stage_name(config.stage)) +
                          " stage requires a base checkpoint");

    Model<float> model;
    if (init) {
        if (!(init->config == config.model))
            throw ConfigError("init checkpoint architecture differs from config");
        model = *init;
    } else {
        model = init_model<float>(config.model, config.seed);
    }

    Rng rng(splitmix64(config.seed ^ 0x7aa1b3c5ull));
    AdamW opt({config.lr, config.beta1, config.beta2, 1e-8, config.weight_decay});
    const LatentGrid zeros = zeros_like(data.scenes.front().states.front());

    if (log) *log << "step,loss,cond_drops\n";
    for (int step = 0; step < config.steps; ++step) {
        std::vector<TrainSample> batch;
        batch.reserve(static_cast<size_t>(config.batch_size));
        for (int b = 0; b < config.batch_size; ++b) {
            const ScenePairs& sp = data.scenes[rng.below(data.scenes.size())];
            TrainSample ts;
            if (config.stage == TrainStage::base) {
                ts.x0 = sp.states.back();
                ts.s = zeros;
                ts.o = zeros;
            } else {
                const size_t i = rng.below(sp.object_class.size());
                const LatentGrid& obj = data.class_latents[size_t(sp.object_class[i])];
                if (config.stage == TrainStage::teacher) {
                    ts.x0 = sp.states[i + 1];
                    ts.s = sp.states[i];
                } else {
                    ts.x0 = sp.states[i];
                    ts.s = sp.states[i + 1];
                }
                ts.o = obj;
            }
            ts.c = sp.c;
            batch.push_back(std::move(ts));
        }
        std::vector<const TrainSample*> ptrs;
        ptrs.reserve(batch.size());
        for (const auto& ts : batch) ptrs.push_back(&ts);

        size_t drops = 0;
        double loss;
        try {
            loss = fm_loss(model, ptrs, rng, config.p_drop, true, &drops);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (training step " +
                                 std::to_string(step) + ")");
        }
        opt.step(model.params);
        model.params.zero_grad();
        model.params.check_finite("train_stage update");
        if (log) *log << step << ',' << loss << ',' << drops << '\n';
    }
    return model;
}

std::vector<SceneBatch> distill_batches(const std::vector<SceneSpec>& specs,
                                        const Catalog& catalog, const ModelConfig& mc) {
    if (specs.empty()) throw DataError("distill_batches: no scenes");
    std::vector<SceneBatch> out;
    out.reserve(specs.size());
    for (const auto& spec : specs) {
        SceneBatch sb;
        sb.scene_id = spec.scene_id;
        sb.s0 = encode(OccupancyGrid(spec.resolution, Frame::scene));
        for (const auto& o : spec.objects)
            sb.objects.push_back(encode(canonical_grid(catalog.find(o.class_id),
                                                       spec.resolution)));
        sb.c = embed_instruction(spec.instruction, mc.vocab, mc.t_max, mc.cond_dim);
        out.push_back(std::move(sb));
    }
    return out;
}

}  // namespace lvg
