#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lvg/metrics.hpp"
#include "lvg/registration.hpp"
#include "lvg/voxel.hpp"

namespace lvg {

// Axis-aligned sub-cuboid of the canonical unit cube. All coordinates are
// multiples of 1/8 so canonical voxelizations stay patch-aligned at G=16.
struct CuboidSpec {
    Vec3 lo, hi;
};

enum class Support : uint8_t { floor = 0, surface = 1 };

struct ObjectClass {
    std::string name;
    std::vector<CuboidSpec> parts;
    Support support = Support::floor;
    double support_height = 0.0;   // ordering key: 0 floor, >0 for surface-mounted
    double surface_height = 0.0;   // local x of a usable top face, 0 if none
    int symmetry = 1;              // yaw symmetry order in {1,2,4}
    double min_scale = 0.3, max_scale = 0.5;

    Vec3 bbox_lo() const;
    Vec3 bbox_hi() const;
};

struct Catalog {
    std::vector<ObjectClass> classes;

    const ObjectClass& find(const std::string& name) const;
    bool has(const std::string& name) const;
    std::unordered_map<std::string, int> symmetry_map() const;
};

// Fixed furniture catalog: 8 compound-cuboid classes.
const Catalog& gen_assets();

struct SceneObject {
    std::string id;
    std::string class_id;
    Placement placement;
    std::string relation;   // against-wall | around | on-top-of | facing | free
    std::string anchor_id;  // empty for against-wall/free
    int order_index = 0;
};

struct SceneSpec {
    std::string scene_id;
    uint64_t seed = 0;
    std::string room_type;
    RoomBounds room;
    int resolution = 16;
    std::vector<SceneObject> objects;
    std::string instruction;
};

// Canonical-frame solid/box/grid for a class, and their placed versions.
Solid canonical_solid(const ObjectClass& cls);
OccupancyGrid canonical_grid(const ObjectClass& cls, int resolution);
Solid place_solid(const ObjectClass& cls, const Placement& p);
OrientedBox place_box(const ObjectClass& cls, const Placement& p);

// Procedural scene: 3-10 objects, relational placement, rejection-sampled
// until collision-free, in-boundary, and pairwise voxel-disjoint at the
// scene resolution. Throws DataError when the 1000-attempt budget runs out.
SceneSpec gen_scene(uint64_t seed, const Catalog& catalog, int resolution = 16);

// Cumulative ground-truth occupancies in bottom-up order.
std::vector<OccupancyGrid> cumulative_occupancies(const SceneSpec& spec, const Catalog& catalog);

struct TrainingPair {
    OccupancyGrid context;   // S_{i-1}
    OccupancyGrid object;    // O_i canonical grid
    OccupancyGrid target;    // S_i
    std::string instruction;
    std::string class_id;
    std::string object_id;
    int order_index = 0;
};

// Teacher-forcing pairs; removal=true swaps context and target per pair.
std::vector<TrainingPair> build_training_pairs(const SceneSpec& spec, const Catalog& catalog,
                                               bool removal = false);

struct DatasetSplits {
    std::vector<SceneSpec> train, val, test;
};

struct DatasetManifest {
    int train_count = 0, val_count = 0, test_count = 0;
    uint64_t train_seed0 = 0, val_seed0 = 0, test_seed0 = 0;
    int resolution = 16;
    std::string checksum;  // FNV-1a over scene JSON payloads, hex
};

// Dataset directory: catalog.json, manifest.json, scenes/{split}/{id}.json
// plus LVGOCC1 occupancy caches of the full scenes.
DatasetManifest save_dataset(const std::string& root, const Catalog& catalog,
                             const DatasetSplits& splits);
SceneSpec load_scene(const std::string& path);
std::vector<std::string> list_scene_files(const std::string& root, const std::string& split);
DatasetManifest load_manifest(const std::string& root);

std::string scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const std::string& text);

// Default split seeds: train 1.., val 20001.., test 30001..
DatasetSplits gen_corpus(const Catalog& catalog, int train_n = 1024, int val_n = 64,
                         int test_n = 128, int resolution = 16);

}  // namespace lvg
