#include "lvg/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lvg/common.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lvg {

namespace {

constexpr double kPi = 3.14159265358979323846;

CuboidSpec box(double x0, double x1, double y0, double y1, double z0, double z1) {
    return CuboidSpec{{x0, y0, z0}, {x1, y1, z1}};
}

Catalog build_catalog() {
    Catalog cat;
    auto add = [&](ObjectClass c) { cat.classes.push_back(std::move(c)); };

    // Part faces sit on multiples of 1/8. Yaw-0 front is the +z face.
    ObjectClass bed;
    bed.name = "bed";
    bed.parts = {box(0.0, 0.25, 0.125, 0.875, 0.125, 0.625),    // mattress
                 box(0.25, 0.625, 0.125, 0.875, 0.125, 0.375)}; // headboard
    bed.symmetry = 1;
    bed.min_scale = 0.40;
    bed.max_scale = 0.55;
    add(bed);

    ObjectClass table;
    table.name = "table";
    table.parts = {box(0.25, 0.5, 0.125, 0.875, 0.125, 0.875),
                   box(0.0, 0.25, 0.375, 0.625, 0.375, 0.625)};
    table.symmetry = 4;
    table.surface_height = 0.5;
    table.min_scale = 0.35;
    table.max_scale = 0.50;
    add(table);

    ObjectClass chair;
    chair.name = "chair";
    chair.parts = {box(0.125, 0.375, 0.25, 0.75, 0.25, 0.75),  // seat
                   box(0.375, 0.875, 0.25, 0.75, 0.25, 0.5),   // backrest
                   box(0.0, 0.125, 0.375, 0.625, 0.375, 0.625)};
    chair.symmetry = 1;
    chair.min_scale = 0.30;
    chair.max_scale = 0.40;
    add(chair);

    ObjectClass sofa;
    sofa.name = "sofa";
    sofa.parts = {box(0.0, 0.25, 0.125, 0.875, 0.25, 0.75),
                  box(0.25, 0.625, 0.125, 0.875, 0.25, 0.5),
                  box(0.25, 0.5, 0.125, 0.25, 0.25, 0.75),
                  box(0.25, 0.5, 0.75, 0.875, 0.25, 0.75)};
    sofa.symmetry = 1;
    sofa.min_scale = 0.40;
    sofa.max_scale = 0.55;
    add(sofa);

    ObjectClass shelf;
    shelf.name = "shelf";
    shelf.parts = {box(0.0, 0.875, 0.25, 0.75, 0.375, 0.625)};
    shelf.symmetry = 2;
    shelf.surface_height = 0.875;
    shelf.min_scale = 0.30;
    shelf.max_scale = 0.45;
    add(shelf);

    ObjectClass lamp;
    lamp.name = "lamp";
    lamp.parts = {box(0.0, 0.125, 0.25, 0.75, 0.25, 0.75),
                  box(0.125, 0.5, 0.375, 0.625, 0.375, 0.625),
                  box(0.5, 0.875, 0.25, 0.75, 0.25, 0.75)};
    lamp.symmetry = 4;
    lamp.support = Support::surface;
    lamp.support_height = 0.5;
    lamp.min_scale = 0.24;
    lamp.max_scale = 0.32;
    add(lamp);

    ObjectClass desk;
    desk.name = "desk";
    desk.parts = {box(0.25, 0.5, 0.125, 0.875, 0.25, 0.75),
                  box(0.0, 0.25, 0.125, 0.375, 0.25, 0.75),
                  box(0.0, 0.25, 0.625, 0.875, 0.25, 0.75)};
    desk.symmetry = 2;
    desk.surface_height = 0.5;
    desk.min_scale = 0.35;
    desk.max_scale = 0.50;
    add(desk);

    ObjectClass rug;
    rug.name = "rug";
    rug.parts = {box(0.0, 0.125, 0.125, 0.875, 0.25, 0.75)};
    rug.symmetry = 2;
    rug.min_scale = 0.40;
    rug.max_scale = 0.60;
    add(rug);

    return cat;
}

struct RoomPlan {
    const char* type;
    const char* intro;
    const char* primary;
    std::vector<const char*> extras;
};

const std::vector<RoomPlan>& room_plans() {
    static const std::vector<RoomPlan> plans = {
        {"bedroom", "a bedroom with", "bed", {"shelf", "chair", "lamp", "rug", "table"}},
        {"living room", "a living room with", "sofa", {"table", "chair", "lamp", "rug", "shelf"}},
        {"office", "an office with", "desk", {"chair", "shelf", "lamp", "table", "rug"}},
        {"studio", "a studio with", "table",
         {"chair", "sofa", "bed", "lamp", "rug", "shelf", "desk"}},
    };
    return plans;
}

// Half extents of a yaw-rotated (hy, hz) footprint along world y/z.
void rotated_half(double hy, double hz, double yaw, double& out_y, double& out_z) {
    const double c = std::fabs(std::cos(yaw)), s = std::fabs(std::sin(yaw));
    out_y = c * hy + s * hz;
    out_z = s * hy + c * hz;
}

enum Relation { kFree = 0, kAgainstWall, kAround, kOnTop, kFacing };

const char* relation_name(int r) {
    switch (r) {
        case kAgainstWall: return "against-wall";
        case kAround: return "around";
        case kOnTop: return "on-top-of";
        case kFacing: return "facing";
        default: return "free";
    }
}

// Walls indexed 0..3: z-lo north, z-hi south, y-lo west, y-hi east.
const char* wall_name(int w) {
    static const char* names[4] = {"north", "south", "west", "east"};
    return names[w & 3];
}

double wall_yaw(int w) {
    static const double yaws[4] = {0.0, kPi, -kPi / 2.0, kPi / 2.0};
    return yaws[w & 3];
}

struct Planned {
    std::string cls;
    int relation = kFree;
    int anchor = -1;  // index into the plan
    int wall = 0;
};

struct PlacedObject {
    SceneObject obj;
    OrientedBox box;
    const ObjectClass* cls = nullptr;
};

// Yaw whose front (+z at yaw 0) points along the unit direction (uy, uz).
double yaw_facing(double uy, double uz) { return std::atan2(-uy, uz); }

bool place_one(const Planned& plan, const Catalog& catalog, const RoomBounds& room,
               const std::vector<PlacedObject>& placed, int resolution, Rng& rng,
               PlacedObject& out) {
    const ObjectClass& cls = catalog.find(plan.cls);
    const Vec3 blo = cls.bbox_lo(), bhi = cls.bbox_hi();
    const Vec3 bc{(blo.x + bhi.x) / 2, (blo.y + bhi.y) / 2, (blo.z + bhi.z) / 2};
    const Vec3 bh{(bhi.x - blo.x) / 2, (bhi.y - blo.y) / 2, (bhi.z - blo.z) / 2};
    const double voxel = 1.0 / resolution;
    const double margin = 0.25 * voxel;
    const double sep = 0.5 * voxel;

    for (int trial = 0; trial < 40; ++trial) {
        const double s = rng.uniform(cls.min_scale, cls.max_scale);
        double yaw = 0.0;
        double by = 0.0, bz = 0.0;  // bbox center, horizontal
        double bottom = room.lo.x;  // world height of the canonical x=0 plane
        bool on_top_pair = false;
        int on_top_index = -1;

        if (plan.relation == kOnTop) {
            const PlacedObject& a = placed[static_cast<size_t>(plan.anchor)];
            const double top = a.obj.placement.translation.x +
                               a.obj.placement.scale * (a.cls->surface_height - 0.5);
            bottom = top;
            yaw = rng.uniform(-kPi, kPi);
            // Sample inside the anchor footprint, shrunk by our own radius.
            const double orad = s * std::hypot(bh.y, bh.z);
            const double uy = a.box.half.y * 0.8 - orad;
            const double uz = a.box.half.z * 0.8 - orad;
            if (uy <= 0.0 || uz <= 0.0) continue;
            const double dy = rng.uniform(-uy, uy), dz = rng.uniform(-uz, uz);
            const Vec3 d = rotate_yaw({0.0, dy, dz}, a.box.yaw);
            by = a.box.center.y + d.y;
            bz = a.box.center.z + d.z;
            on_top_pair = true;
            on_top_index = plan.anchor;
        } else if (plan.relation == kAgainstWall) {
            const int w = plan.wall;
            yaw = wall_yaw(w);
            double hy, hz;
            rotated_half(s * bh.y, s * bh.z, yaw, hy, hz);
            const double gap = rng.uniform(0.5, 1.5) * voxel;
            const double ylo = room.lo.y + hy + margin, yhi = room.hi.y - hy - margin;
            const double zlo = room.lo.z + hz + margin, zhi = room.hi.z - hz - margin;
            if (ylo >= yhi || zlo >= zhi) continue;
            switch (w) {
                case 0: bz = room.lo.z + gap + hz; by = rng.uniform(ylo, yhi); break;
                case 1: bz = room.hi.z - gap - hz; by = rng.uniform(ylo, yhi); break;
                case 2: by = room.lo.y + gap + hy; bz = rng.uniform(zlo, zhi); break;
                default: by = room.hi.y - gap - hy; bz = rng.uniform(zlo, zhi); break;
            }
        } else if (plan.relation == kAround) {
            const PlacedObject& a = placed[static_cast<size_t>(plan.anchor)];
            const double arad = std::hypot(a.box.half.y, a.box.half.z);
            const double orad = s * std::hypot(bh.y, bh.z);
            const double r = arad + orad + rng.uniform(1.5, 3.0) * voxel;
            const double phi = rng.uniform(0.0, 2.0 * kPi);
            by = a.box.center.y + r * std::cos(phi);
            bz = a.box.center.z + r * std::sin(phi);
            const double n = std::hypot(a.box.center.y - by, a.box.center.z - bz);
            yaw = yaw_facing((a.box.center.y - by) / n, (a.box.center.z - bz) / n);
        } else {
            yaw = rng.uniform(-kPi, kPi);
            double hy, hz;
            rotated_half(s * bh.y, s * bh.z, yaw, hy, hz);
            const double ylo = room.lo.y + hy + margin, yhi = room.hi.y - hy - margin;
            const double zlo = room.lo.z + hz + margin, zhi = room.hi.z - hz - margin;
            if (ylo >= yhi || zlo >= zhi) continue;
            by = rng.uniform(ylo, yhi);
            bz = rng.uniform(zlo, zhi);
            if (plan.relation == kFacing) {
                const PlacedObject& a = placed[static_cast<size_t>(plan.anchor)];
                const double dy = a.box.center.y - by, dz = a.box.center.z - bz;
                const double n = std::hypot(dy, dz);
                if (n < 1e-9) continue;
                yaw = yaw_facing(dy / n, dz / n);
            }
        }

        // Canonical-center position from the sampled bbox center.
        const Vec3 off = rotate_yaw({(bc.x - 0.5) * s, (bc.y - 0.5) * s, (bc.z - 0.5) * s}, yaw);
        Placement p;
        p.translation = {bottom + 0.5 * s, by - off.y, bz - off.z};
        p.yaw = wrap_angle(yaw);
        p.scale = s;
        OrientedBox wb = place_box(cls, p);

        // Keep the rotated bbox inside the room with a small margin.
        double hy, hz;
        rotated_half(wb.half.y, wb.half.z, wb.yaw, hy, hz);
        if (wb.center.x - wb.half.x < room.lo.x - 1e-12 ||
            wb.center.x + wb.half.x > room.hi.x - margin ||
            wb.center.y - hy < room.lo.y + margin || wb.center.y + hy > room.hi.y - margin ||
            wb.center.z - hz < room.lo.z + margin || wb.center.z + hz > room.hi.z - margin)
            continue;

        bool ok = true;
        for (size_t i = 0; i < placed.size(); ++i) {
            const double pen = penetration_depth(wb, placed[i].box);
            const double limit = (on_top_pair && static_cast<int>(i) == on_top_index)
                                     ? 1e-9
                                     : -sep;
            if (pen > limit) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;

        out.obj.class_id = cls.name;
        out.obj.placement = p;
        out.obj.relation = relation_name(plan.relation);
        out.box = wb;
        out.cls = &cls;
        return true;
    }
    return false;
}

uint64_t fnv1a(uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("bad vector in scene json");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Vec3 ObjectClass::bbox_lo() const {
    Vec3 lo{1e30, 1e30, 1e30};
    for (const auto& p : parts) {
        lo.x = std::min(lo.x, p.lo.x);
        lo.y = std::min(lo.y, p.lo.y);
        lo.z = std::min(lo.z, p.lo.z);
    }
    return lo;
}

Vec3 ObjectClass::bbox_hi() const {
    Vec3 hi{-1e30, -1e30, -1e30};
    for (const auto& p : parts) {
        hi.x = std::max(hi.x, p.hi.x);
        hi.y = std::max(hi.y, p.hi.y);
        hi.z = std::max(hi.z, p.hi.z);
    }
    return hi;
}

const ObjectClass& Catalog::find(const std::string& name) const {
    for (const auto& c : classes)
        if (c.name == name) return c;
    throw ConfigError("unknown object class: " + name);
}

bool Catalog::has(const std::string& name) const {
    for (const auto& c : classes)
        if (c.name == name) return true;
    return false;
}

std::unordered_map<std::string, int> Catalog::symmetry_map() const {
    std::unordered_map<std::string, int> m;
    for (const auto& c : classes) m[c.name] = c.symmetry;
    return m;
}

const Catalog& gen_assets() {
    static const Catalog cat = build_catalog();
    return cat;
}

Solid canonical_solid(const ObjectClass& cls) {
    Solid s;
    for (const auto& p : cls.parts) {
        OrientedCuboid c;
        c.center = {(p.lo.x + p.hi.x) / 2, (p.lo.y + p.hi.y) / 2, (p.lo.z + p.hi.z) / 2};
        c.half = {(p.hi.x - p.lo.x) / 2, (p.hi.y - p.lo.y) / 2, (p.hi.z - p.lo.z) / 2};
        c.yaw = 0.0;
        s.parts.push_back(c);
    }
    return s;
}

OccupancyGrid canonical_grid(const ObjectClass& cls, int resolution) {
    return voxelize(canonical_solid(cls), resolution, Frame::canonical);
}

Solid place_solid(const ObjectClass& cls, const Placement& p) {
    Solid s;
    for (const auto& part : cls.parts) {
        const Vec3 lc{(part.lo.x + part.hi.x) / 2 - 0.5, (part.lo.y + part.hi.y) / 2 - 0.5,
                      (part.lo.z + part.hi.z) / 2 - 0.5};
        OrientedCuboid c;
        const Vec3 off = rotate_yaw({lc.x * p.scale, lc.y * p.scale, lc.z * p.scale}, p.yaw);
        c.center = {p.translation.x + off.x, p.translation.y + off.y, p.translation.z + off.z};
        c.half = {(part.hi.x - part.lo.x) / 2 * p.scale, (part.hi.y - part.lo.y) / 2 * p.scale,
                  (part.hi.z - part.lo.z) / 2 * p.scale};
        c.yaw = p.yaw;
        s.parts.push_back(c);
    }
    return s;
}

OrientedBox place_box(const ObjectClass& cls, const Placement& p) {
    const Vec3 lo = cls.bbox_lo(), hi = cls.bbox_hi();
    const Vec3 lc{(lo.x + hi.x) / 2 - 0.5, (lo.y + hi.y) / 2 - 0.5, (lo.z + hi.z) / 2 - 0.5};
    const Vec3 off = rotate_yaw({lc.x * p.scale, lc.y * p.scale, lc.z * p.scale}, p.yaw);
    OrientedBox b;
    b.center = {p.translation.x + off.x, p.translation.y + off.y, p.translation.z + off.z};
    b.half = {(hi.x - lo.x) / 2 * p.scale, (hi.y - lo.y) / 2 * p.scale,
              (hi.z - lo.z) / 2 * p.scale};
    b.yaw = p.yaw;
    return b;
}

SceneSpec gen_scene(uint64_t seed, const Catalog& catalog, int resolution) {
    if (resolution < 2) throw ConfigError("scene resolution must be at least 2");
    Rng rng(seed);

    const RoomPlan& rp = room_plans()[rng.below(room_plans().size())];
    RoomBounds room;
    room.lo = {0.0, rng.uniform(0.0, 0.1), rng.uniform(0.0, 0.1)};
    room.hi = {rng.uniform(0.8, 1.0), rng.uniform(0.9, 1.0), rng.uniform(0.9, 1.0)};
    const int want = 3 + static_cast<int>(rng.below(8));

    for (int attempt = 0; attempt < 1000; ++attempt) {
        // Hard rooms shed one planned object per 100 failed attempts, so the
        // floor of 3 is reached with 300 attempts still in the budget.
        const int n = std::max(3, want - attempt / 100);

        // Plan: primary anchor first, then related extras.
        std::vector<Planned> plan;
        Planned first;
        first.cls = rp.primary;
        if (rng.uniform() < 0.5) {
            first.relation = kAgainstWall;
            first.wall = static_cast<int>(rng.below(4));
        }
        plan.push_back(first);
        for (int k = 1; k < n; ++k) {
            Planned pl;
            int surface_anchor = -1;
            for (int i = static_cast<int>(plan.size()) - 1; i >= 0; --i) {
                if (catalog.find(plan[static_cast<size_t>(i)].cls).surface_height > 0.0) {
                    surface_anchor = i;
                    break;
                }
            }
            const double u = rng.uniform();
            if (surface_anchor >= 0 && u < 0.2) {
                pl.cls = "lamp";
                pl.relation = kOnTop;
                pl.anchor = surface_anchor;
            } else {
                pl.cls = rp.extras[rng.below(rp.extras.size())];
                const double v = rng.uniform();
                if (v < 0.3) {
                    pl.relation = kAgainstWall;
                    pl.wall = static_cast<int>(rng.below(4));
                } else if (v < 0.55) {
                    pl.relation = kAround;
                    pl.anchor = 0;
                } else if (v < 0.75) {
                    pl.relation = kFacing;
                    pl.anchor = 0;
                } else {
                    pl.relation = kFree;
                }
            }
            plan.push_back(pl);
        }

        std::vector<PlacedObject> placed;
        bool complete = true;
        for (const auto& pl : plan) {
            PlacedObject po;
            if (!place_one(pl, catalog, room, placed, resolution, rng, po)) {
                complete = false;
                break;
            }
            po.obj.anchor_id = pl.anchor >= 0 ? std::to_string(pl.anchor) : std::string();
            placed.push_back(std::move(po));
        }
        if (!complete) continue;

        // Instance ids in plan order; anchor ids resolved afterwards.
        std::unordered_map<std::string, int> counts;
        for (auto& po : placed) {
            const int idx = counts[po.obj.class_id]++;
            po.obj.id = po.obj.class_id + "_" + std::to_string(idx);
        }
        for (auto& po : placed) {
            if (!po.obj.anchor_id.empty())
                po.obj.anchor_id = placed[static_cast<size_t>(std::stoi(po.obj.anchor_id))].obj.id;
        }

        // Geometric acceptance: collision-free, in-boundary, voxel-disjoint.
        MetricParams mp;
        mp.tau = 1.0 / resolution;
        std::vector<OrientedBox> boxes;
        for (const auto& po : placed) boxes.push_back(po.box);
        const auto coll = collision_flags(boxes, mp.tau);
        const auto inb = in_bounds_flags(boxes, room, mp.tau);
        bool ok = true;
        for (size_t i = 0; i < placed.size() && ok; ++i) ok = !coll[i] && inb[i];
        if (!ok) continue;

        size_t cell_sum = 0;
        OccupancyGrid uni(resolution, Frame::scene);
        for (const auto& po : placed) {
            OccupancyGrid g = voxelize(place_solid(*po.cls, po.obj.placement), resolution,
                                       Frame::scene);
            const size_t c = g.occupied_count();
            if (c < 3) {
                ok = false;
                break;
            }
            cell_sum += c;
            for (int h = 0; h < resolution && ok; ++h)
                for (int w = 0; w < resolution; ++w)
                    for (int l = 0; l < resolution; ++l)
                        if (g.at(h, w, l)) uni.set(h, w, l, true);
        }
        if (!ok || cell_sum != uni.occupied_count()) continue;

        // Instruction mentions every object in plan order.
        std::ostringstream text;
        text << rp.intro;
        std::unordered_map<std::string, int> seen;
        for (size_t i = 0; i < placed.size(); ++i) {
            const auto& po = placed[i];
            if (i + 1 == placed.size() && placed.size() > 1)
                text << (placed.size() > 2 ? ", and " : " and ");
            else if (i > 0)
                text << ", ";
            else
                text << " ";
            text << (seen[po.obj.class_id]++ ? "another " : "a ") << po.obj.class_id;
            const int rel = [&] {
                for (int r = kFree; r <= kFacing; ++r)
                    if (po.obj.relation == relation_name(r)) return r;
                return static_cast<int>(kFree);
            }();
            if (rel == kAgainstWall)
                text << " against the " << wall_name(plan[i].wall) << " wall";
            else if (rel == kAround)
                text << " around the " << placed[static_cast<size_t>(plan[i].anchor)].obj.class_id;
            else if (rel == kOnTop)
                text << " on the " << placed[static_cast<size_t>(plan[i].anchor)].obj.class_id;
            else if (rel == kFacing)
                text << " facing the " << placed[static_cast<size_t>(plan[i].anchor)].obj.class_id;
        }
        text << ".";

        // Bottom-up order: class support height, then object id.
        std::vector<size_t> order(placed.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            const double sa = placed[a].cls->support_height, sb = placed[b].cls->support_height;
            if (sa != sb) return sa < sb;
            return placed[a].obj.id < placed[b].obj.id;
        });

        SceneSpec spec;
        spec.scene_id = "scene_" + std::to_string(seed);
        spec.seed = seed;
        spec.room_type = rp.type;
        spec.room = room;
        spec.resolution = resolution;
        spec.instruction = text.str();
        for (size_t r = 0; r < order.size(); ++r) {
            SceneObject o = placed[order[r]].obj;
            o.order_index = static_cast<int>(r);
            o.placement.order_index = static_cast<int>(r);
            o.placement.object_id = o.id;
            o.placement.class_id = o.class_id;
            spec.objects.push_back(std::move(o));
        }
        return spec;
    }
    throw DataError("scene rejection budget exhausted for seed " + std::to_string(seed));
}

std::vector<OccupancyGrid> cumulative_occupancies(const SceneSpec& spec, const Catalog& catalog) {
    std::vector<OccupancyGrid> out;
    OccupancyGrid acc(spec.resolution, Frame::scene);
    out.push_back(acc);
    for (const auto& o : spec.objects) {
        const OccupancyGrid g =
            voxelize(place_solid(catalog.find(o.class_id), o.placement), spec.resolution,
                     Frame::scene);
        for (int h = 0; h < spec.resolution; ++h)
            for (int w = 0; w < spec.resolution; ++w)
                for (int l = 0; l < spec.resolution; ++l)
                    if (g.at(h, w, l)) acc.set(h, w, l, true);
        out.push_back(acc);
    }
    return out;
}

std::vector<TrainingPair> build_training_pairs(const SceneSpec& spec, const Catalog& catalog,
                                               bool removal) {
    const auto cum = cumulative_occupancies(spec, catalog);
    std::vector<TrainingPair> pairs;
    for (size_t i = 0; i < spec.objects.size(); ++i) {
        const auto& o = spec.objects[i];
        TrainingPair tp;
        tp.context = cum[i];
        tp.target = cum[i + 1];
        if (removal) std::swap(tp.context, tp.target);
        tp.object = canonical_grid(catalog.find(o.class_id), spec.resolution);
        tp.instruction = spec.instruction;
        tp.class_id = o.class_id;
        tp.object_id = o.id;
        tp.order_index = o.order_index;
        pairs.push_back(std::move(tp));
    }
    return pairs;
}

std::string scene_to_json(const SceneSpec& spec) {
    json j;
    j["scene_id"] = spec.scene_id;
    j["seed"] = spec.seed;
    j["room_type"] = spec.room_type;
    j["resolution"] = spec.resolution;
    j["room"] = {{"lo", vec_json(spec.room.lo)}, {"hi", vec_json(spec.room.hi)}};
    j["instruction"] = spec.instruction;
    json objs = json::array();
    for (const auto& o : spec.objects) {
        json jo;
        jo["id"] = o.id;
        jo["class"] = o.class_id;
        jo["position"] = vec_json(o.placement.translation);
        jo["yaw"] = o.placement.yaw;
        jo["scale"] = o.placement.scale;
        jo["relation"] = o.relation;
        jo["anchor"] = o.anchor_id;
        jo["order_index"] = o.order_index;
        objs.push_back(std::move(jo));
    }
    j["objects"] = std::move(objs);
    return j.dump(2);
}

SceneSpec scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("scene json parse failed: ") + e.what());
    }
    try {
        SceneSpec spec;
        spec.scene_id = j.at("scene_id").get<std::string>();
        spec.seed = j.at("seed").get<uint64_t>();
        spec.room_type = j.at("room_type").get<std::string>();
        spec.resolution = j.at("resolution").get<int>();
        spec.room.lo = vec_from(j.at("room").at("lo"));
        spec.room.hi = vec_from(j.at("room").at("hi"));
        spec.instruction = j.at("instruction").get<std::string>();
        for (const auto& jo : j.at("objects")) {
            SceneObject o;
            o.id = jo.at("id").get<std::string>();
            o.class_id = jo.at("class").get<std::string>();
            o.placement.translation = vec_from(jo.at("position"));
            o.placement.yaw = jo.at("yaw").get<double>();
            o.placement.scale = jo.at("scale").get<double>();
            o.relation = jo.at("relation").get<std::string>();
            o.anchor_id = jo.at("anchor").get<std::string>();
            o.order_index = jo.at("order_index").get<int>();
            o.placement.order_index = o.order_index;
            o.placement.object_id = o.id;
            o.placement.class_id = o.class_id;
            spec.objects.push_back(std::move(o));
        }
        return spec;
    } catch (const json::exception& e) {
        throw DataError(std::string("scene json missing field: ") + e.what());
    }
}

DatasetSplits gen_corpus(const Catalog& catalog, int train_n, int val_n, int test_n,
                         int resolution) {
    DatasetSplits out;
    char buf[32];
    for (int i = 0; i < train_n; ++i) {
        out.train.push_back(gen_scene(1 + static_cast<uint64_t>(i), catalog, resolution));
        std::snprintf(buf, sizeof buf, "train_%06d", i);
        out.train.back().scene_id = buf;
    }
    for (int i = 0; i < val_n; ++i) {
        out.val.push_back(gen_scene(20001 + static_cast<uint64_t>(i), catalog, resolution));
        std::snprintf(buf, sizeof buf, "val_%06d", i);
        out.val.back().scene_id = buf;
    }
    for (int i = 0; i < test_n; ++i) {
        out.test.push_back(gen_scene(30001 + static_cast<uint64_t>(i), catalog, resolution));
        std::snprintf(buf, sizeof buf, "test_%06d", i);
        out.test.back().scene_id = buf;
    }
    return out;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot write " + p.string());
    f << text;
    if (!f) throw DataError("write failed for " + p.string());
}

std::string read_text(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json catalog_json(const Catalog& catalog) {
    json classes = json::array();
    for (const auto& c : catalog.classes) {
        json jc;
        jc["name"] = c.name;
        jc["symmetry"] = c.symmetry;
        jc["support"] = c.support == Support::floor ? "floor" : "surface";
        jc["support_height"] = c.support_height;
        jc["surface_height"] = c.surface_height;
        jc["min_scale"] = c.min_scale;
        jc["max_scale"] = c.max_scale;
        json parts = json::array();
        for (const auto& p : c.parts)
            parts.push_back({{"lo", vec_json(p.lo)}, {"hi", vec_json(p.hi)}});
        jc["parts"] = std::move(parts);
        classes.push_back(std::move(jc));
    }
    return json{{"classes", std::move(classes)}};
}

}  // namespace

DatasetManifest save_dataset(const std::string& root, const Catalog& catalog,
                             const DatasetSplits& splits) {
    const fs::path base(root);
    fs::create_directories(base / "scenes" / "train");
    fs::create_directories(base / "scenes" / "val");
    fs::create_directories(base / "scenes" / "test");
    write_text(base / "catalog.json", catalog_json(catalog).dump(2));

    DatasetManifest m;
    uint64_t h = 0xcbf29ce484222325ull;
    auto emit = [&](const std::vector<SceneSpec>& specs, const char* split) {
        for (const auto& spec : specs) {
            const std::string payload = scene_to_json(spec);
            h = fnv1a(h, payload);
            const fs::path dir = base / "scenes" / split;
            write_text(dir / (spec.scene_id + ".json"), payload);
            const auto cum = cumulative_occupancies(spec, catalog);
            save_occupancy((dir / (spec.scene_id + ".occ")).string(), cum.back());
        }
    };
    emit(splits.train, "train");
    emit(splits.val, "val");
    emit(splits.test, "test");

    m.train_count = static_cast<int>(splits.train.size());
    m.val_count = static_cast<int>(splits.val.size());
    m.test_count = static_cast<int>(splits.test.size());
    m.train_seed0 = splits.train.empty() ? 0 : splits.train.front().seed;
    m.val_seed0 = splits.val.empty() ? 0 : splits.val.front().seed;
    m.test_seed0 = splits.test.empty() ? 0 : splits.test.front().seed;
    m.resolution = splits.train.empty()
                       ? (splits.test.empty() ? 16 : splits.test.front().resolution)
                       : splits.train.front().resolution;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    m.checksum = hex;

    json jm;
    jm["train_count"] = m.train_count;
    jm["val_count"] = m.val_count;
    jm["test_count"] = m.test_count;
    jm["train_seed0"] = m.train_seed0;
    jm["val_seed0"] = m.val_seed0;
    jm["test_seed0"] = m.test_seed0;
    jm["resolution"] = m.resolution;
    jm["checksum"] = m.checksum;
    write_text(base / "manifest.json", jm.dump(2));
    return m;
}

SceneSpec load_scene(const std::string& path) { return scene_from_json(read_text(path)); }

std::vector<std::string> list_scene_files(const std::string& root, const std::string& split) {
    const fs::path dir = fs::path(root) / "scenes" / split;
    if (!fs::is_directory(dir)) throw DataError("missing split directory " + dir.string());
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

DatasetManifest load_manifest(const std::string& root) {
    json j;
    try {
        j = json::parse(read_text(fs::path(root) / "manifest.json"));
        DatasetManifest m;
        m.train_count = j.at("train_count").get<int>();
        m.val_count = j.at("val_count").get<int>();
        m.test_count = j.at("test_count").get<int>();
        m.train_seed0 = j.at("train_seed0").get<uint64_t>();
        m.val_seed0 = j.at("val_seed0").get<uint64_t>();
        m.test_seed0 = j.at("test_seed0").get<uint64_t>();
        m.resolution = j.at("resolution").get<int>();
        m.checksum = j.at("checksum").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad manifest: ") + e.what());
    }
}

}  // namespace lvg
