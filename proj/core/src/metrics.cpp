#include "lvg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lvg {

namespace {

struct Footprint {
    double cy, cz;       // center in the horizontal plane
    double ay, az;       // axis unit vectors: a = (cos, sin), b = (-sin, cos)
    double hy, hz;       // half extents along local axes
};

Footprint footprint(const OrientedBox& b) {
    return {b.center.y, b.center.z, std::cos(b.yaw), std::sin(b.yaw), b.half.y, b.half.z};
}

// Overlap of the two footprints projected on a unit axis (uy, uz).
double axis_overlap(const Footprint& a, const Footprint& b, double uy, double uz) {
    double dist = std::abs((b.cy - a.cy) * uy + (b.cz - a.cz) * uz);
    double ra = a.hy * std::abs(a.ay * uy + a.az * uz) +
                a.hz * std::abs(-a.az * uy + a.ay * uz);
    double rb = b.hy * std::abs(b.ay * uy + b.az * uz) +
                b.hz * std::abs(-b.az * uy + b.ay * uz);
    return ra + rb - dist;
}

}  // namespace

double penetration_depth(const OrientedBox& a, const OrientedBox& b) {
    a.validate();
    b.validate();
    double vertical = (a.half.x + b.half.x) - std::abs(a.center.x - b.center.x);
    Footprint fa = footprint(a), fb = footprint(b);
    double pen = vertical;
    const Footprint* fs[2] = {&fa, &fb};
    for (const Footprint* f : fs) {
        pen = std::min(pen, axis_overlap(fa, fb, f->ay, f->az));
        pen = std::min(pen, axis_overlap(fa, fb, -f->az, f->ay));
    }
    return pen;
}

std::vector<bool> collision_flags(const std::vector<OrientedBox>& boxes, double tau) {
    std::vector<bool> flags(boxes.size(), false);
    for (size_t i = 0; i < boxes.size(); ++i)
        for (size_t j = i + 1; j < boxes.size(); ++j)
            if (penetration_depth(boxes[i], boxes[j]) > tau) {
                flags[i] = true;
                flags[j] = true;
            }
    return flags;
}

std::vector<bool> in_bounds_flags(const std::vector<OrientedBox>& boxes, const RoomBounds& room,
                                  double tau) {
    std::vector<bool> flags(boxes.size(), true);
    for (size_t i = 0; i < boxes.size(); ++i) {
        const OrientedBox& b = boxes[i];
        b.validate();
        for (int m = 0; m < 8; ++m) {
            Vec3 local{(m & 1) ? b.half.x : -b.half.x, (m & 2) ? b.half.y : -b.half.y,
                       (m & 4) ? b.half.z : -b.half.z};
            Vec3 c = rotate_yaw(local, b.yaw) + b.center;
            if (c.x < room.lo.x - tau || c.x > room.hi.x + tau || c.y < room.lo.y - tau ||
                c.y > room.hi.y + tau || c.z < room.lo.z - tau || c.z > room.hi.z + tau) {
                flags[i] = false;
                break;
            }
        }
    }
    return flags;
}

ScoreReport score_scene(const std::vector<ScoredObject>& generated,
                        const std::vector<ScoredObject>& truth, const RoomBounds& room,
                        const MetricParams& params) {
    if (truth.empty()) throw DataError("score_scene: empty ground truth");

    std::unordered_map<std::string, const ScoredObject*> gen_by_id;
    for (const auto& g : generated) {
        if (!gen_by_id.emplace(g.placement.object_id, &g).second)
            throw DataError("score_scene: duplicate generated id " + g.placement.object_id);
    }

    std::vector<const ScoredObject*> placed;
    std::vector<size_t> placed_truth_index;
    std::vector<ObjectFlags> flags(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) {
        const std::string& id = truth[i].placement.object_id;
        flags[i].id = id;
        auto it = gen_by_id.find(id);
        if (it != gen_by_id.end()) {
            flags[i].placed = true;
            placed.push_back(it->second);
            placed_truth_index.push_back(i);
        }
    }

    std::vector<OrientedBox> boxes;
    for (const auto* g : placed) boxes.push_back(g->box);
    std::vector<bool> colliding = collision_flags(boxes, params.tau);
    std::vector<bool> inb = in_bounds_flags(boxes, room, params.tau);

    for (size_t k = 0; k < placed.size(); ++k) {
        size_t i = placed_truth_index[k];
        const Placement& got = placed[k]->placement;
        const Placement& want = truth[i].placement;
        flags[i].colliding = colliding[k];
        flags[i].in_bounds = inb[k];
        Vec3 dp = got.translation - want.translation;
        flags[i].pos_ok = dp.norm() <= params.delta_pos;
        int order = 1;
        auto sym = params.symmetry_by_class.find(want.class_id);
        if (sym != params.symmetry_by_class.end()) order = sym->second;
        double best = std::numeric_limits<double>::infinity();
        for (int m = 0; m < order; ++m) {
            double shifted = want.yaw + 6.283185307179586 * double(m) / double(order);
            best = std::min(best, std::abs(wrap_angle(got.yaw - shifted)));
        }
        flags[i].rot_ok = best <= params.delta_yaw;
    }

    ScoreReport report;
    report.objects = std::move(flags);
    double n = double(report.objects.size());
    int cf = 0, ib = 0, pos = 0, rot = 0, psa = 0;
    for (const ObjectFlags& f : report.objects) {
        cf += !f.colliding;
        ib += f.in_bounds;
        pos += f.pos_ok;
        rot += f.rot_ok;
        psa += (f.pos_ok && f.rot_ok && !f.colliding && f.in_bounds);
    }
    report.cf = 100.0 * cf / n;
    report.ib = 100.0 * ib / n;
    report.pos = 100.0 * pos / n;
    report.rot = 100.0 * rot / n;
    report.psa = 100.0 * psa / n;
    return report;
}

double mean(const std::vector<double>& values) {
    if (values.empty()) throw DataError("mean: empty");
    double acc = 0;
    for (double v : values) acc += v;
    return acc / double(values.size());
}

std::pair<double, double> bootstrap_mean_ci(const std::vector<double>& values, int resamples,
                                            uint64_t seed) {
    if (values.empty()) throw DataError("bootstrap_mean_ci: empty");
    if (resamples < 1) throw ConfigError("bootstrap_mean_ci: resamples < 1");
    Rng rng(seed);
    std::vector<double> means(resamples);
    for (int r = 0; r < resamples; ++r) {
        double acc = 0;
        for (size_t i = 0; i < values.size(); ++i)
            acc += values[rng.below(values.size())];
        means[r] = acc / double(values.size());
    }
    std::sort(means.begin(), means.end());
    auto pick = [&](double q) {
        double pos = q * double(resamples - 1);
        size_t lo = size_t(pos);
        size_t hi = std::min(lo + 1, size_t(resamples - 1));
        double frac = pos - double(lo);
        return means[lo] * (1 - frac) + means[hi] * frac;
    };
    return {pick(0.025), pick(0.975)};
}

}  // namespace lvg
