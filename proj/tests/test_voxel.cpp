#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "lvg/common.hpp"
#include "lvg/voxel.hpp"

using namespace lvg;

namespace {

Solid box(Vec3 center, Vec3 half, double yaw = 0.0) {
    Solid s;
    s.parts.push_back({center, half, yaw});
    return s;
}

// Independent containment check: rotate into the local frame by hand.
bool oracle_contains(const OrientedCuboid& c, const Vec3& p) {
    double dy = p.y - c.center.y, dz = p.z - c.center.z;
    double cs = std::cos(-c.yaw), sn = std::sin(-c.yaw);
    double ly = cs * dy - sn * dz;
    double lz = sn * dy + cs * dz;
    return std::abs(p.x - c.center.x) <= c.half.x && std::abs(ly) <= c.half.y &&
           std::abs(lz) <= c.half.z;
}

size_t oracle_count(const Solid& s, int g) {
    size_t n = 0;
    for (int h = 0; h < g; ++h)
        for (int w = 0; w < g; ++w)
            for (int l = 0; l < g; ++l) {
                Vec3 p{(h + 0.5) / g, (w + 0.5) / g, (l + 0.5) / g};
                for (const auto& c : s.parts)
                    if (oracle_contains(c, p)) {
                        ++n;
                        break;
                    }
            }
    return n;
}

}  // namespace

TEST_CASE("yaw rotation spins +y toward +z about the vertical axis") {
    Vec3 p{0.0, 1.0, 0.0};
    Vec3 q = rotate_yaw(p, M_PI / 2);
    CHECK(q.x == doctest::Approx(0.0));
    CHECK(q.y == doctest::Approx(0.0));
    CHECK(q.z == doctest::Approx(1.0));

    Vec3 up{1.0, 0.0, 0.0};
    Vec3 r = rotate_yaw(up, 1.234);
    CHECK(r.x == doctest::Approx(1.0));
    CHECK(r.y == doctest::Approx(0.0));
    CHECK(r.z == doctest::Approx(0.0));

    // composition
    Vec3 a = rotate_yaw(rotate_yaw(p, 0.4), 0.7);
    Vec3 b = rotate_yaw(p, 1.1);
    CHECK(a.y == doctest::Approx(b.y));
    CHECK(a.z == doctest::Approx(b.z));
}

TEST_CASE("voxelize fills the unit cube completely") {
    auto g = voxelize(box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}), 4);
    CHECK(g.occupied_count() == 64);
    CHECK(g.resolution() == 4);
    CHECK(g.frame() == Frame::scene);
}

TEST_CASE("voxelize of an empty solid is an empty grid") {
    auto g = voxelize(Solid{}, 4);
    CHECK(g.occupied_count() == 0);
    CHECK(g.empty_grid());
}

TEST_CASE("voxelize half-cube slab occupies exactly half the cells") {
    // y in [0, 0.5]: centers 0.125 and 0.375 inside, 0.625 and 0.875 out
    auto g = voxelize(box({0.5, 0.25, 0.5}, {0.5, 0.25, 0.5}), 4);
    CHECK(g.occupied_count() == 32);
    for (int h = 0; h < 4; ++h)
        for (int l = 0; l < 4; ++l) {
            CHECK(g.at(h, 0, l));
            CHECK(g.at(h, 1, l));
            CHECK_FALSE(g.at(h, 2, l));
            CHECK_FALSE(g.at(h, 3, l));
        }
}

TEST_CASE("voxelize matches center enumeration for rotated cuboids") {
    Rng rng(0xb0c5);
    for (int trial = 0; trial < 20; ++trial) {
        Vec3 half{rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.15)};
        double m = std::max({half.x, half.y, half.z}) * 1.5;  // keep rotations inside
        Vec3 center{rng.uniform(m, 1 - m), rng.uniform(m, 1 - m), rng.uniform(m, 1 - m)};
        double yaw = rng.uniform(0, 2 * M_PI);
        Solid s = box(center, half, yaw);
        auto g = voxelize(s, 16);
        CHECK(g.occupied_count() == oracle_count(s, 16));
        for (int h = 0; h < 16; ++h)
            for (int w = 0; w < 16; ++w)
                for (int l = 0; l < 16; ++l) {
                    bool want = oracle_contains(s.parts[0], g.voxel_center(h, w, l));
                    if (g.at(h, w, l) != want) {
                        CAPTURE(trial);
                        CHECK(g.at(h, w, l) == want);
                    }
                }
    }
}

TEST_CASE("voxelize is monotone in the solid") {
    Solid inner = box({0.5, 0.5, 0.5}, {0.2, 0.15, 0.25}, 0.3);
    Solid outer = inner;
    outer.parts.push_back({{0.5, 0.5, 0.5}, {0.3, 0.3, 0.3}, 0.0});
    auto gi = voxelize(inner, 16);
    auto go = voxelize(outer, 16);
    for (int h = 0; h < 16; ++h)
        for (int w = 0; w < 16; ++w)
            for (int l = 0; l < 16; ++l)
                if (gi.at(h, w, l)) CHECK(go.at(h, w, l));
}

TEST_CASE("voxelize rejects bad inputs") {
    CHECK_THROWS_AS(voxelize(box({0.9, 0.5, 0.5}, {0.2, 0.1, 0.1}), 8), DataError);
    CHECK_THROWS_AS(voxelize(box({0.5, 0.5, 0.5}, {0.1, 0.1, 0.1}), 1), DataError);
}

TEST_CASE("grid difference basics") {
    auto a = voxelize(box({0.25, 0.5, 0.5}, {0.25, 0.3, 0.3}), 8);

    SUBCASE("identical grids yield nothing") {
        CHECK(grid_difference(a, a).empty());
    }
    SUBCASE("difference against an empty grid is the occupied set") {
        OccupancyGrid empty(8);
        auto d = grid_difference(a, empty);
        CHECK(d.size() == a.occupied_count());
        // strictly increasing row-major order
        for (size_t i = 1; i < d.positions.size(); ++i)
            CHECK(d.positions[i - 1] < d.positions[i]);
        for (const auto& v : d.positions) CHECK(a.at(v.h, v.w, v.l));
    }
    SUBCASE("resolution mismatch throws") {
        CHECK_THROWS_AS(grid_difference(a, OccupancyGrid(4)), DataError);
    }
}

TEST_CASE("difference of a scene before and after adding a disjoint object") {
    Solid table = box({0.2, 0.3, 0.3}, {0.2, 0.15, 0.15});
    Solid lamp = box({0.15, 0.75, 0.75}, {0.15, 0.08, 0.08});
    Solid both = table;
    both.parts.push_back(lamp.parts[0]);

    auto before = voxelize(table, 16);
    auto after = voxelize(both, 16);
    auto diff = grid_difference(after, before);

    // the difference is exactly the lamp's own voxelization
    auto lamp_only = voxelize(lamp, 16);
    CHECK(grid_from_voxels(diff, 16) == lamp_only);

    // union of difference and before reconstructs after
    OccupancyGrid rebuilt = before;
    for (const auto& v : diff.positions) rebuilt.set(v.h, v.w, v.l, true);
    CHECK(rebuilt == after);
}

TEST_CASE("surface extraction") {
    SUBCASE("single voxel") {
        OccupancyGrid g(8);
        g.set(3, 4, 5, true);
        auto pts = surface_points(g);
        REQUIRE(pts.size() == 1);
        Vec3 c = g.voxel_center(3, 4, 5);
        CHECK(pts.points[0].x == doctest::Approx(c.x));
        CHECK(pts.points[0].y == doctest::Approx(c.y));
        CHECK(pts.points[0].z == doctest::Approx(c.z));
    }
    SUBCASE("full 4-cube sheds its 8 interior voxels") {
        auto g = voxelize(box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}), 4);
        CHECK(surface_points(g).size() == 56);
    }
    SUBCASE("a 1x1 column is all surface") {
        OccupancyGrid g(8);
        for (int h = 0; h < 8; ++h) g.set(h, 2, 2, true);
        CHECK(surface_points(g).size() == 8);
    }
    SUBCASE("two-thick slab has no interior") {
        OccupancyGrid g(8);
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 8; ++w)
                for (int l = 0; l < 8; ++l) g.set(h, w, l, true);
        CHECK(surface_points(g).size() == g.occupied_count());
    }
    SUBCASE("surface count never exceeds occupancy") {
        auto g = voxelize(box({0.5, 0.5, 0.5}, {0.4, 0.35, 0.3}, 0.7), 16);
        CHECK(surface_points(g).size() <= g.occupied_count());
        CHECK(surface_points(g).size() < g.occupied_count());  // it has an interior
    }
    SUBCASE("empty grid throws") {
        CHECK_THROWS_AS(surface_points(OccupancyGrid(8)), DataError);
    }
    SUBCASE("region surface matches dense surface of the same voxels") {
        auto g = voxelize(box({0.3, 0.4, 0.5}, {0.25, 0.2, 0.3}), 8);
        auto region = voxels_from_grid(g);
        auto a = region_surface_points(region, 8);
        auto b = surface_points(g);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a.points[i].x == b.points[i].x);
            CHECK(a.points[i].y == b.points[i].y);
            CHECK(a.points[i].z == b.points[i].z);
        }
        CHECK_THROWS_AS(region_surface_points(SparseVoxelSet{}, 8), DataError);
    }
}

TEST_CASE("iou") {
    auto full = voxelize(box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}), 4);
    auto bottom = voxelize(box({0.25, 0.5, 0.5}, {0.25, 0.5, 0.5}), 4);
    auto top = voxelize(box({0.75, 0.5, 0.5}, {0.25, 0.5, 0.5}), 4);

    CHECK(iou(full, full) == 1.0);
    CHECK(iou(bottom, top) == 0.0);
    CHECK(iou(bottom, full) == doctest::Approx(0.5));
    CHECK(iou(OccupancyGrid(4), OccupancyGrid(4)) == 1.0);
    CHECK(iou(bottom, OccupancyGrid(4)) == 0.0);
    CHECK_THROWS_AS(iou(full, OccupancyGrid(8)), DataError);
}

TEST_CASE("sparse and dense voxel views round trip") {
    auto g = voxelize(box({0.4, 0.5, 0.6}, {0.3, 0.25, 0.2}, 1.1), 16);
    auto sparse = voxels_from_grid(g);
    CHECK(sparse.size() == g.occupied_count());
    for (size_t i = 1; i < sparse.positions.size(); ++i)
        CHECK(sparse.positions[i - 1] < sparse.positions[i]);
    CHECK(grid_from_voxels(sparse, 16) == g);

    SparseVoxelSet bad;
    bad.positions.push_back({16, 0, 0});
    CHECK_THROWS_AS(grid_from_voxels(bad, 16), DataError);
}

TEST_CASE("occupancy stream round trip") {
    Rng rng(0x0cc);
    OccupancyGrid g(16);
    for (int i = 0; i < 500; ++i)
        g.set(int(rng.below(16)), int(rng.below(16)), int(rng.below(16)), rng.uniform() < 0.7);

    std::stringstream ss;
    write_occupancy(ss, g);
    OccupancyGrid back = read_occupancy(ss);
    CHECK(back == g);

    SUBCASE("file round trip") {
        auto path = (std::filesystem::temp_directory_path() / "lvg_occ_test.bin").string();
        save_occupancy(path, g);
        CHECK(load_occupancy(path) == g);
        std::remove(path.c_str());
    }
    SUBCASE("bad magic") {
        std::stringstream junk("NOTOCC00junkjunk");
        CHECK_THROWS_AS(read_occupancy(junk), DataError);
    }
    SUBCASE("truncated stream") {
        std::string payload = ss.str();
        std::stringstream cut(payload.substr(0, payload.size() / 2));
        CHECK_THROWS_AS(read_occupancy(cut), DataError);
    }
}

TEST_CASE("ply output is parseable and complete") {
    OccupancyGrid g(4);
    g.set(0, 0, 0, true);
    g.set(3, 3, 3, true);
    auto pts = surface_points(g);

    std::stringstream ss;
    write_ply(ss, pts);

    std::string line;
    std::getline(ss, line);
    CHECK(line == "ply");
    size_t vertex_count = 0;
    while (std::getline(ss, line) && line != "end_header") {
        if (line.rfind("element vertex ", 0) == 0)
            vertex_count = std::stoul(line.substr(15));
    }
    REQUIRE(vertex_count == pts.size());
    for (size_t i = 0; i < vertex_count; ++i) {
        REQUIRE(std::getline(ss, line));
        double x, y, z;
        REQUIRE(std::sscanf(line.c_str(), "%lf %lf %lf", &x, &y, &z) == 3);
        CHECK(x == doctest::Approx(pts.points[i].x));
        CHECK(y == doctest::Approx(pts.points[i].y));
        CHECK(z == doctest::Approx(pts.points[i].z));
    }
}
