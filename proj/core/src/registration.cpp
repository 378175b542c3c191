#include "lvg/registration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace lvg {

namespace {

std::array<double, 9> yaw_matrix(double yaw) {
    double c = std::cos(yaw), s = std::sin(yaw);
    return {1, 0, 0, 0, c, -s, 0, s, c};
}

Vec3 centroid(const PointCloud& cloud, const std::vector<int>& idx) {
    Vec3 m;
    for (int i : idx) m = m + cloud.points[i];
    return m * (1.0 / double(idx.size()));
}

}  // namespace

Similarity umeyama(const PointCloud& source, const PointCloud& target,
                   const std::vector<std::pair<int, int>>& correspondences, RotationMode mode) {
    if (correspondences.size() < 3) throw DataError("umeyama: need >= 3 correspondences");
    std::vector<int> si, ti;
    si.reserve(correspondences.size());
    ti.reserve(correspondences.size());
    for (auto [a, b] : correspondences) {
        if (a < 0 || a >= int(source.size()) || b < 0 || b >= int(target.size()))
            throw DataError("umeyama: correspondence index out of range");
        si.push_back(a);
        ti.push_back(b);
    }
    Vec3 mp = centroid(source, si), mq = centroid(target, ti);
    size_t n = correspondences.size();

    double src_sq = 0;
    for (int i : si) {
        Vec3 p = source.points[i] - mp;
        src_sq += p.dot(p);
    }
    if (src_sq < 1e-12) throw DataError("umeyama: degenerate source spread");

    Similarity out;
    if (mode == RotationMode::yaw_only) {
        double cross = 0, dot = 0, planar = 0, axial = 0;
        for (size_t k = 0; k < n; ++k) {
            Vec3 p = source.points[si[k]] - mp;
            Vec3 q = target.points[ti[k]] - mq;
            cross += p.y * q.z - p.z * q.y;
            dot += p.y * q.y + p.z * q.z;
            axial += p.x * q.x;
            planar += p.y * p.y + p.z * p.z;
        }
        if (planar < 1e-12) throw DataError("umeyama: source points collinear with the yaw axis");
        double yaw = (std::abs(cross) < 1e-15 && std::abs(dot) < 1e-15)
                         ? 0.0
                         : std::atan2(cross, dot);
        out.yaw = wrap_angle(yaw);
        out.rotation = yaw_matrix(out.yaw);
        double c = std::cos(out.yaw), s = std::sin(out.yaw);
        out.scale = (axial + c * dot + s * cross) / src_sq;
    } else {
        Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
        for (size_t k = 0; k < n; ++k) {
            Vec3 p = source.points[si[k]] - mp;
            Vec3 q = target.points[ti[k]] - mq;
            Eigen::Vector3d pe(p.x, p.y, p.z), qe(q.x, q.y, q.z);
            H += qe * pe.transpose();
        }
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::Vector3d d = svd.singularValues();
        if (d(1) < 1e-12) throw DataError("umeyama: rank-deficient correspondence set");
        Eigen::Matrix3d S = Eigen::Matrix3d::Identity();
        if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1;
        Eigen::Matrix3d R = svd.matrixU() * S * svd.matrixV().transpose();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out.rotation[r * 3 + c] = R(r, c);
        out.scale = (d(0) * S(0, 0) + d(1) * S(1, 1) + d(2) * S(2, 2)) / src_sq;
        out.yaw = wrap_angle(std::atan2(R(2, 1), R(1, 1)));
    }
    if (!(out.scale > 0)) throw DataError("umeyama: non-positive scale");
    Vec3 rp{out.rotation[0] * mp.x + out.rotation[1] * mp.y + out.rotation[2] * mp.z,
            out.rotation[3] * mp.x + out.rotation[4] * mp.y + out.rotation[5] * mp.z,
            out.rotation[6] * mp.x + out.rotation[7] * mp.y + out.rotation[8] * mp.z};
    out.translation = mq - rp * out.scale;
    return out;
}

namespace {

PointCloud downsample_points(const PointCloud& cloud, int max_points, uint64_t seed) {
    if (int(cloud.size()) <= max_points) return cloud;
    std::vector<int> idx(cloud.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
    Rng rng(seed);
    for (int i = 0; i < max_points; ++i) {
        int j = i + int(rng.below(uint64_t(idx.size() - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
    PointCloud out;
    out.points.reserve(max_points);
    for (int i : idx) out.points.push_back(cloud.points[i]);
    return out;
}

int nearest_index(const Vec3& p, const PointCloud& cloud) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < cloud.size(); ++j) {
        Vec3 d = cloud.points[j] - p;
        double dist = d.dot(d);
        if (dist < best_d) {
            best_d = dist;
            best = int(j);
        }
    }
    return best;
}

struct Candidate {
    Similarity sim;
    double rms = std::numeric_limits<double>::infinity();
    bool valid = false;
};

}  // namespace

Placement fit_placement(const OccupancyGrid& canonical, const SparseVoxelSet& region,
                        int region_resolution, const IcpConfig& config) {
    config.validate();
    if (region.empty()) throw DataError("fit_placement: empty region");
    if (canonical.empty_grid()) throw DataError("fit_placement: empty canonical grid");

    PointCloud source =
        downsample_points(surface_points(canonical), config.max_source_points, config.seed);
    PointCloud target = region_surface_points(region, region_resolution);

    Vec3 tlo{1e30, 1e30, 1e30}, thi{-1e30, -1e30, -1e30};
    Vec3 tmean;
    for (const Vec3& p : target.points) {
        tlo = {std::min(tlo.x, p.x), std::min(tlo.y, p.y), std::min(tlo.z, p.z)};
        thi = {std::max(thi.x, p.x), std::max(thi.y, p.y), std::max(thi.z, p.z)};
        tmean = tmean + p;
    }
    tmean = tmean * (1.0 / double(target.size()));
    Vec3 diag = thi - tlo;
    double diameter = std::max(diag.norm(), 1.0 / double(region_resolution));

    Vec3 smean;
    for (const Vec3& p : source.points) smean = smean + p;
    smean = smean * (1.0 / double(source.size()));

    Candidate best;
    int best_index = -1;
    const double two_pi = 6.283185307179586;
    for (int k = 0; k < config.yaw_candidates; ++k) {
        double yaw0 = two_pi * double(k) / double(config.yaw_candidates);
        Candidate cand;
        cand.sim.yaw = wrap_angle(yaw0);
        cand.sim.rotation = yaw_matrix(cand.sim.yaw);
        cand.sim.scale = 1.0;
        Vec3 rs = {smean.x, std::cos(yaw0) * smean.y - std::sin(yaw0) * smean.z,
                   std::sin(yaw0) * smean.y + std::cos(yaw0) * smean.z};
        cand.sim.translation = tmean - rs;

        double prev_rms = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < config.max_iterations; ++iter) {
            std::vector<std::pair<int, int>> corr;
            corr.reserve(source.size());
            for (size_t i = 0; i < source.size(); ++i)
                corr.emplace_back(int(i), nearest_index(cand.sim.apply(source.points[i]), target));
            Similarity solved;
            try {
                solved = umeyama(source, target, corr, config.mode);
            } catch (const DataError&) {
                cand.valid = false;
                break;
            }
            double acc = 0;
            for (auto [i, j] : corr) {
                Vec3 d = solved.apply(source.points[i]) - target.points[j];
                acc += d.dot(d);
            }
            double rms = std::sqrt(acc / double(corr.size()));
            cand.sim = solved;
            cand.rms = rms;
            cand.valid = true;
            if (std::abs(prev_rms - rms) < config.tolerance) break;
            prev_rms = rms;
        }
        if (cand.valid && cand.rms < best.rms) {
            best = cand;
            best_index = k;
        }
    }

    if (best_index < 0 || best.rms > diameter) {
        std::string msg = "fit_placement: all candidates diverged";
        if (best_index >= 0)
            msg += " (best rms " + std::to_string(best.rms) + ", yaw " +
                   std::to_string(best.sim.yaw) + ")";
        throw DataError(msg);
    }

    Placement p;
    p.yaw = wrap_angle(best.sim.yaw);
    p.scale = best.sim.scale;
    p.translation = best.sim.apply({0.5, 0.5, 0.5});
    p.rms_error = best.rms;
    return p;
}

}  // namespace lvg
