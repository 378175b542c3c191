#include "lvg/rollout.hpp"

#include <algorithm>
#include <limits>

#include "json.hpp"
#include "lvg/common.hpp"

namespace lvg {

uint64_t step_seed(uint64_t base, int index) {
    return splitmix64(base + 0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(index) + 1));
}

namespace {

SamplerConfig step_sampler(const SamplerConfig& base, int index) {
    SamplerConfig c = base;
    c.seed = step_seed(base.seed, index);
    return c;
}

}  // namespace

ObjectQueue order_objects(const std::vector<QueueItem>& objects, const Catalog& catalog,
                          OrderPolicy policy, const std::string& instruction, int resolution) {
    if (objects.empty()) throw DataError("order_objects: empty object set");

    struct Key {
        size_t mention;
        double support;
        std::string class_id;
        std::string id;
        size_t input_pos;
    };
    std::vector<Key> keys;
    keys.reserve(objects.size());

    std::vector<std::string> tokens;
    if (policy == OrderPolicy::instruction_order) tokens = tokenize_instruction(instruction);
    auto first_mention = [&](const std::string& cls) -> size_t {
        for (size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] == cls) return i;
        return std::numeric_limits<size_t>::max();
    };

    for (size_t i = 0; i < objects.size(); ++i) {
        const ObjectClass& cls = catalog.find(objects[i].class_id);  // unknown class throws
        Key k;
        k.mention = policy == OrderPolicy::instruction_order ? first_mention(cls.name) : 0;
        k.support = cls.support_height;
        k.class_id = cls.name;
        k.id = objects[i].id;
        k.input_pos = i;
        keys.push_back(std::move(k));
    }
    std::stable_sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
        if (a.mention != b.mention) return a.mention < b.mention;
        if (a.support != b.support) return a.support < b.support;
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        return a.id < b.id;
    });

    ObjectQueue queue;
    queue.reserve(keys.size());
    for (const auto& k : keys) {
        QueueEntry e;
        e.id = k.id;
        e.class_id = k.class_id;
        e.canonical = canonical_grid(catalog.find(k.class_id), resolution);
        e.latent = encode(e.canonical);
        queue.push_back(std::move(e));
    }
    return queue;
}

RolloutState make_state(const OccupancyGrid& occupancy) {
    RolloutState st;
    st.latent = encode(occupancy);
    st.occupancy = decode(st.latent, occupancy.resolution());
    st.occupancy.set_frame(Frame::scene);
    return st;
}

RolloutState step(Model<float>& model, const RolloutState& state, const QueueEntry& entry,
                  const ConditionEmbedding& c, const SamplerConfig& sampler) {
    if (!entry.latent.same_shape(state.latent))
        throw DataError("rollout step: object latent shape mismatch");
    std::pair<LatentGrid, SampleStats> out;
    try {
        out = sample_model(model, state.latent, entry.latent, c, sampler);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " (rollout step " +
                             std::to_string(state.index) + ")");
    }
    RolloutState next;
    next.index = state.index + 1;
    next.history = state.history;
    next.history.push_back(out.first);
    next.occupancy = decode(out.first, state.occupancy.resolution());
    next.occupancy.set_frame(Frame::scene);
    next.latent = encode(next.occupancy);
    return next;
}

GenerateResult generate(Model<float>& model, const RolloutState& start, const ObjectQueue& queue,
                        const ConditionEmbedding& c, const SamplerConfig& sampler,
                        const IcpConfig& icp) {
    if (queue.empty()) throw DataError("generate: empty object queue");
    GenerateResult res;
    res.state = start;
    for (size_t i = 0; i < queue.size(); ++i) {
        const OccupancyGrid before = res.state.occupancy;
        try {
            res.state = step(model, res.state, queue[i], c,
                             step_sampler(sampler, static_cast<int>(i)));
        } catch (const NumericalError& e) {
            throw RolloutAbort(e.what(), static_cast<int>(i), std::move(res), true);
        }
        const SparseVoxelSet region = grid_difference(res.state.occupancy, before);
        Placement p;
        try {
            p = fit_placement(queue[i].canonical, region, before.resolution(), icp);
        } catch (const DataError& e) {
            throw RolloutAbort(std::string(e.what()) + " (placement fit, step " +
                                   std::to_string(i) + ")",
                               static_cast<int>(i), std::move(res), false);
        }
        p.object_id = queue[i].id;
        p.class_id = queue[i].class_id;
        p.order_index = static_cast<int>(i);
        res.placements.push_back(std::move(p));
    }
    return res;
}

GenerateResult complete(Model<float>& model, const OccupancyGrid& partial_scene,
                        const ObjectQueue& queue, const ConditionEmbedding& c,
                        const SamplerConfig& sampler, const IcpConfig& icp) {
    if (queue.empty()) throw DataError("complete: empty object queue");
    return generate(model, make_state(partial_scene), queue, c, sampler, icp);
}

LatentGrid edit_remove(Model<float>& model_edit, const RolloutState& scene,
                       const QueueEntry& entry, const OccupancyGrid& object_region,
                       const ConditionEmbedding& c, const SamplerConfig& sampler) {
    if (object_region.resolution() != scene.occupancy.resolution())
        throw DataError("edit_remove: region resolution mismatch");
    bool overlaps = false;
    const int g = object_region.resolution();
    for (int h = 0; h < g && !overlaps; ++h)
        for (int w = 0; w < g && !overlaps; ++w)
            for (int l = 0; l < g; ++l)
                if (object_region.at(h, w, l) && scene.occupancy.at(h, w, l)) {
                    overlaps = true;
                    break;
                }
    if (!overlaps) throw DataError("edit_remove: marked object does not overlap the scene");
    return sample_model(model_edit, scene.latent, entry.latent, c, sampler).first;
}

std::string layout_to_json(const std::string& scene_id, int resolution,
                           const std::string& instruction,
                           const std::vector<Placement>& placements) {
    nlohmann::json j;
    j["scene_id"] = scene_id;
    j["grid_resolution"] = resolution;
    j["instruction"] = instruction;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& p : placements) {
        nlohmann::json jo;
        jo["id"] = p.object_id;
        jo["class"] = p.class_id;
        jo["position"] = {p.translation.x, p.translation.y, p.translation.z};
        jo["yaw"] = p.yaw;
        jo["scale"] = p.scale;
        jo["order_index"] = p.order_index;
        objs.push_back(std::move(jo));
    }
    j["objects"] = std::move(objs);
    return j.dump(2);
}

}  // namespace lvg
