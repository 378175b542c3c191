#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "lvg/voxel.hpp"

namespace lvg {

// Recovered similarity transform for one placed object.
struct Placement {
    std::string object_id;
    std::string class_id;
    Vec3 translation;        // world units, canonical center -> scene
    double yaw = 0.0;        // radians in [-pi, pi)
    double scale = 1.0;
    double rms_error = 0.0;
    int order_index = 0;
};

enum class RotationMode { yaw_only, full };

struct IcpConfig {
    int max_iterations = 50;
    double tolerance = 1e-6;  // rms-change convergence threshold
    int yaw_candidates = 8;   // K_yaw uniformly spaced initial yaws
    RotationMode mode = RotationMode::yaw_only;
    int max_source_points = 512;
    uint64_t seed = 0x1c9;

    void validate() const {
        if (max_iterations < 1) throw ConfigError("IcpConfig: max_iterations < 1");
        if (!(tolerance > 0)) throw ConfigError("IcpConfig: tolerance <= 0");
        if (yaw_candidates < 1) throw ConfigError("IcpConfig: yaw_candidates < 1");
        if (max_source_points < 3) throw ConfigError("IcpConfig: max_source_points < 3");
    }
};

struct Similarity {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
    double yaw = 0.0;  // meaningful in yaw_only mode
    double scale = 1.0;
    Vec3 translation;

    Vec3 apply(const Vec3& p) const {
        const auto& r = rotation;
        Vec3 q{r[0] * p.x + r[1] * p.y + r[2] * p.z, r[3] * p.x + r[4] * p.y + r[5] * p.z,
               r[6] * p.x + r[7] * p.y + r[8] * p.z};
        return q * scale + translation;
    }
};

inline double wrap_angle(double a) {
    const double two_pi = 6.283185307179586;
    a = std::fmod(a + 3.141592653589793, two_pi);
    if (a < 0) a += two_pi;
    return a - 3.141592653589793;
}

// Closed-form least-squares similarity over explicit correspondences
// (source index, target index). yaw_only restricts rotation to the vertical
// axis; full solves SO(3) via SVD.
Similarity umeyama(const PointCloud& source, const PointCloud& target,
                   const std::vector<std::pair<int, int>>& correspondences, RotationMode mode);

// ICP between the canonical object surface (downsampled, seeded) and the
// surface of a scene-difference region, multi-start over K_yaw initial yaws;
// returns the minimum-rms candidate (lowest index on ties).
Placement fit_placement(const OccupancyGrid& canonical, const SparseVoxelSet& region,
                        int region_resolution, const IcpConfig& config = {});

}  // namespace lvg
