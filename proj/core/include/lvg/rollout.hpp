#pragma once

#include <string>
#include <vector>

#include "lvg/flow.hpp"
#include "lvg/latent.hpp"
#include "lvg/registration.hpp"
#include "lvg/scenes.hpp"
#include "lvg/text.hpp"
#include "lvg/voxel.hpp"

namespace lvg {

// Evolving scene state. The latent is the authority; occupancy is its
// decoding, re-encoded after every step so long rollouts cannot drift.
struct RolloutState {
    int index = 0;
    LatentGrid latent;
    OccupancyGrid occupancy;
    std::vector<LatentGrid> history;  // raw sampled latents, one per step
};

struct QueueEntry {
    std::string id;
    std::string class_id;
    OccupancyGrid canonical;
    LatentGrid latent;  // encode(canonical)
};

using ObjectQueue = std::vector<QueueEntry>;

struct QueueItem {
    std::string id;
    std::string class_id;
};

enum class OrderPolicy { bottom_up, instruction_order };

// bottom_up: ascending class support height, class name then id as
// tie-breaks. instruction_order: first mention of the class name in the
// instruction; unmentioned classes follow in bottom-up order.
ObjectQueue order_objects(const std::vector<QueueItem>& objects, const Catalog& catalog,
                          OrderPolicy policy, const std::string& instruction, int resolution);

RolloutState make_state(const OccupancyGrid& occupancy);

// One autoregressive step: sample a new scene latent conditioned on the
// current state, the object, and the instruction.
RolloutState step(Model<float>& model, const RolloutState& state, const QueueEntry& entry,
                  const ConditionEmbedding& c, const SamplerConfig& sampler);

struct GenerateResult {
    RolloutState state;
    std::vector<Placement> placements;
};

// Step failure wrapper carrying everything produced before the abort.
class RolloutAbort : public Error {
public:
    RolloutAbort(const std::string& msg, int step_index, GenerateResult partial, bool numerical)
        : Error(msg), step(step_index), result(std::move(partial)), numerical_cause(numerical) {}

    int step;
    GenerateResult result;
    bool numerical_cause;
};

// Seed for the i-th step of a rollout whose base sampler seed is `base`.
uint64_t step_seed(uint64_t base, int index);

// Folds step over the queue; each step's grid difference is fitted back to
// a Placement. Per-step sampler seeds come from step_seed(sampler.seed, i).
GenerateResult generate(Model<float>& model, const RolloutState& start, const ObjectQueue& queue,
                        const ConditionEmbedding& c, const SamplerConfig& sampler,
                        const IcpConfig& icp = {});

// Layout completion: generation from a partially filled scene.
GenerateResult complete(Model<float>& model, const OccupancyGrid& partial_scene,
                        const ObjectQueue& queue, const ConditionEmbedding& c,
                        const SamplerConfig& sampler, const IcpConfig& icp = {});

// Removal edit: model_edit was trained with swapped context/target. The
// marked object region (scene frame) must overlap the scene occupancy.
LatentGrid edit_remove(Model<float>& model_edit, const RolloutState& scene,
                       const QueueEntry& entry, const OccupancyGrid& object_region,
                       const ConditionEmbedding& c, const SamplerConfig& sampler);

// Layout JSON for a finished rollout (one scene per file).
std::string layout_to_json(const std::string& scene_id, int resolution,
                           const std::string& instruction,
                           const std::vector<Placement>& placements);

}  // namespace lvg
