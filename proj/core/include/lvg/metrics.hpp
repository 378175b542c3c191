#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lvg/registration.hpp"
#include "lvg/voxel.hpp"

namespace lvg {

// Yaw-only oriented box: local x is vertical, yaw spins the (y,z) footprint.
struct OrientedBox {
    Vec3 center;
    Vec3 half;
    double yaw = 0.0;

    void validate() const {
        if (!(half.x > 0 && half.y > 0 && half.z > 0))
            throw DataError("OrientedBox: non-positive half extent");
    }
};

struct RoomBounds {
    Vec3 lo{0, 0, 0};
    Vec3 hi{1, 1, 1};
};

struct MetricParams {
    double tau = 1.0 / 16.0;            // one voxel at the active resolution
    double delta_pos = 0.05;            // positional coherency threshold
    double delta_yaw = 0.2617993877991494;  // 15 degrees
    std::unordered_map<std::string, int> symmetry_by_class;  // yaw symmetry order, default 1
};

struct ObjectFlags {
    std::string id;
    bool placed = false;
    bool colliding = true;
    bool in_bounds = false;
    bool pos_ok = false;
    bool rot_ok = false;
};

struct ScoreReport {
    double cf = 0, ib = 0, pos = 0, rot = 0, psa = 0;  // all in [0,100]
    std::vector<ObjectFlags> objects;
    double seconds = 0;
};

// Signed penetration depth of two yaw-only boxes: minimum overlap over the
// separating axes (vertical interval + 4 footprint edge normals). Positive
// means overlap; <= 0 means separated.
double penetration_depth(const OrientedBox& a, const OrientedBox& b);

// Object i collides iff some pair penetration exceeds tau.
std::vector<bool> collision_flags(const std::vector<OrientedBox>& boxes, double tau);

// Object in-boundary iff all 8 corners lie inside the room inflated by tau.
std::vector<bool> in_bounds_flags(const std::vector<OrientedBox>& boxes, const RoomBounds& room,
                                  double tau);

// One scored object: recovered placement plus its world box footprint.
struct ScoredObject {
    Placement placement;
    OrientedBox box;
};

// Scores generated placements against ground truth. Every ground-truth id
// must be present in `truth`; generated objects are matched by id, and
// missing ones fail all flags (they still count in the denominators).
ScoreReport score_scene(const std::vector<ScoredObject>& generated,
                        const std::vector<ScoredObject>& truth, const RoomBounds& room,
                        const MetricParams& params);

double mean(const std::vector<double>& values);

// Percentile bootstrap 95% interval of the mean, seeded.
std::pair<double, double> bootstrap_mean_ci(const std::vector<double>& values, int resamples,
                                            uint64_t seed);

}  // namespace lvg
