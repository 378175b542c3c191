#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "lvg/distill.hpp"
#include "lvg/flow.hpp"
#include "lvg/model.hpp"
#include "lvg/scenes.hpp"

namespace lvg {

enum class TrainStage { base, teacher, edit };

TrainStage stage_from_string(const std::string& name);
const char* stage_name(TrainStage stage);

struct TrainConfig {
    TrainStage stage = TrainStage::base;
    int steps = 2000;
    int batch_size = 1;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    double p_drop = kCondDropRate;
    uint64_t seed = 0;
    ModelConfig model;

    void validate() const;
};

// Latent-level training corpus: per scene the encoded cumulative states
// S_0..S_n plus per-step class indices into a shared canonical-latent cache.
struct ScenePairs {
    std::vector<LatentGrid> states;
    std::vector<int> object_class;
    ConditionEmbedding c;
};

struct TrainData {
    std::vector<ScenePairs> scenes;
    std::vector<LatentGrid> class_latents;
    std::vector<std::string> class_names;
};

TrainData prepare_training_data(const std::vector<SceneSpec>& specs, const Catalog& catalog,
                                const ModelConfig& mc);

// One training stage. base: text-only over final states; teacher: forward
// pairs; edit: swapped pairs. teacher/edit require `init` (the base model).
// CSV log columns: step,loss,cond_drops. NaN aborts with the step number.
Model<float> train_stage(const TrainConfig& config, const TrainData& data,
                         const Model<float>* init, std::ostream* log);

// Distillation scene batches (S0 plus object queue latents) for a spec list.
std::vector<SceneBatch> distill_batches(const std::vector<SceneSpec>& specs,
                                        const Catalog& catalog, const ModelConfig& mc);

}  // namespace lvg
