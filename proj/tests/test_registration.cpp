#include <doctest.h>

#include <cmath>

#include "lvg/registration.hpp"

using namespace lvg;

namespace {

// Chair-like asymmetric test object centered on the canonical cube center:
// a seat slab plus a back panel on one side, so yaw is identifiable.
Solid chair_solid() {
    Solid s;
    s.parts.push_back({{0.40, 0.5, 0.50}, {0.05, 0.20, 0.20}, 0.0});
    s.parts.push_back({{0.60, 0.5, 0.32}, {0.15, 0.20, 0.03}, 0.0});
    return s;
}

// Canonical parts mapped into the scene: rotate/scale about the canonical
// center (0.5,0.5,0.5), then move that center to pos.
Solid place_chair(const Vec3& pos, double yaw, double scale) {
    const Vec3 c0{0.5, 0.5, 0.5};
    Solid out;
    for (const auto& part : chair_solid().parts) {
        OrientedCuboid q;
        q.center = rotate_yaw((part.center - c0) * scale, yaw) + pos;
        q.half = part.half * scale;
        q.yaw = part.yaw + yaw;
        out.parts.push_back(q);
    }
    return out;
}

PointCloud random_cloud(int n, uint64_t seed) {
    Rng rng(seed);
    PointCloud c;
    for (int i = 0; i < n; ++i)
        c.points.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)});
    return c;
}

std::vector<std::pair<int, int>> identity_corr(int n) {
    std::vector<std::pair<int, int>> c;
    for (int i = 0; i < n; ++i) c.emplace_back(i, i);
    return c;
}

}  // namespace

TEST_CASE("angle wrapping lands in [-pi, pi)") {
    CHECK(wrap_angle(0.0) == doctest::Approx(0.0));
    CHECK(wrap_angle(M_PI) == doctest::Approx(-M_PI));
    CHECK(wrap_angle(-M_PI) == doctest::Approx(-M_PI));
    CHECK(wrap_angle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
    CHECK(wrap_angle(-3 * M_PI / 2) == doctest::Approx(M_PI / 2));
    CHECK(wrap_angle(2 * M_PI) == doctest::Approx(0.0));
    CHECK(wrap_angle(7.5) == doctest::Approx(7.5 - 2 * M_PI));
}

TEST_CASE("similarity solve on identical clouds is the identity") {
    auto cloud = random_cloud(12, 1);
    auto sim = umeyama(cloud, cloud, identity_corr(12), RotationMode::yaw_only);
    CHECK(sim.yaw == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(sim.scale == doctest::Approx(1.0));
    CHECK(sim.translation.norm() < 1e-12);
}

TEST_CASE("similarity solve recovers pure translation and scale") {
    auto src = random_cloud(10, 2);
    PointCloud dst;
    const Vec3 shift{0.05, -0.1, 0.12};
    for (const auto& p : src.points) dst.points.push_back(p * 2.0 + shift);
    auto sim = umeyama(src, dst, identity_corr(10), RotationMode::yaw_only);
    CHECK(sim.scale == doctest::Approx(2.0));
    CHECK(sim.yaw == doctest::Approx(0.0).epsilon(1e-9));
    for (const auto& p : src.points) {
        Vec3 err = sim.apply(p) - (p * 2.0 + shift);
        CHECK(err.norm() < 1e-9);
    }
}

TEST_CASE("similarity solve recovers a known yaw transform exactly") {
    auto src = random_cloud(15, 3);
    Rng rng(4);
    for (int trial = 0; trial < 6; ++trial) {
        double yaw = rng.uniform(-M_PI, M_PI);
        double scale = rng.uniform(0.7, 1.4);
        Vec3 d{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
        PointCloud dst;
        for (const auto& p : src.points) dst.points.push_back(rotate_yaw(p, yaw) * scale + d);

        auto sim = umeyama(src, dst, identity_corr(15), RotationMode::yaw_only);
        CHECK(std::abs(wrap_angle(sim.yaw - yaw)) < 1e-9);
        CHECK(sim.scale == doctest::Approx(scale).epsilon(1e-9));
        for (const auto& p : src.points) {
            Vec3 err = sim.apply(p) - (rotate_yaw(p, yaw) * scale + d);
            CHECK(err.norm() < 1e-9);
        }
    }
}

TEST_CASE("full rotation mode handles an off-axis rotation") {
    auto src = random_cloud(15, 5);
    const double phi = 0.7;  // rotation about the y axis, outside the yaw family
    double c = std::cos(phi), s = std::sin(phi);
    PointCloud dst;
    for (const auto& p : src.points)
        dst.points.push_back(Vec3{c * p.x + s * p.z, p.y, -s * p.x + c * p.z} * 1.3);

    auto sim = umeyama(src, dst, identity_corr(15), RotationMode::full);
    CHECK(sim.scale == doctest::Approx(1.3).epsilon(1e-9));
    for (size_t i = 0; i < src.size(); ++i) {
        Vec3 err = sim.apply(src.points[i]) - dst.points[i];
        CHECK(err.norm() < 1e-9);
    }

    // the yaw-restricted solver cannot reach this fit
    auto yaw_sim = umeyama(src, dst, identity_corr(15), RotationMode::yaw_only);
    double worst = 0;
    for (size_t i = 0; i < src.size(); ++i)
        worst = std::max(worst, (yaw_sim.apply(src.points[i]) - dst.points[i]).norm());
    CHECK(worst > 1e-3);
}

TEST_CASE("similarity solve rejects degenerate input") {
    auto cloud = random_cloud(8, 6);
    CHECK_THROWS_AS(umeyama(cloud, cloud, {{0, 0}, {1, 1}}, RotationMode::yaw_only), DataError);
    CHECK_THROWS_AS(umeyama(cloud, cloud, {{0, 0}, {1, 1}, {99, 2}}, RotationMode::yaw_only),
                    DataError);

    PointCloud degenerate;
    for (int i = 0; i < 5; ++i) degenerate.points.push_back({0.5, 0.5, 0.5});
    CHECK_THROWS_AS(umeyama(degenerate, cloud, identity_corr(5), RotationMode::yaw_only),
                    DataError);

    PointCloud axis;  // spread only along the vertical axis
    for (int i = 0; i < 5; ++i) axis.points.push_back({0.1 * i, 0.5, 0.5});
    CHECK_THROWS_AS(umeyama(axis, cloud, identity_corr(5), RotationMode::yaw_only), DataError);
    CHECK_THROWS_AS(umeyama(axis, cloud, identity_corr(5), RotationMode::full), DataError);
}

TEST_CASE("icp config validation") {
    IcpConfig cfg;
    cfg.validate();
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.tolerance = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.yaw_candidates = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.max_source_points = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("fitting a region to its own canonical grid returns the identity pose") {
    const int G = 32;
    auto canonical = voxelize(chair_solid(), G, Frame::canonical);
    auto region = voxels_from_grid(canonical);

    auto p = fit_placement(canonical, region, G);
    CHECK(std::abs(wrap_angle(p.yaw)) < 0.01);
    CHECK(p.scale == doctest::Approx(1.0).epsilon(0.005));
    CHECK(std::abs(p.translation.x - 0.5) < 0.01);
    CHECK(std::abs(p.translation.y - 0.5) < 0.01);
    CHECK(std::abs(p.translation.z - 0.5) < 0.01);
    CHECK(p.rms_error < 1.0 / G);
}

TEST_CASE("icp recovers randomized placements of an asymmetric object") {
    const int G = 32;
    auto canonical = voxelize(chair_solid(), G, Frame::canonical);
    Rng rng(0x5eed);
    for (int trial = 0; trial < 8; ++trial) {
        double yaw = rng.uniform(-M_PI, M_PI);
        double scale = rng.uniform(0.9, 1.1);
        Vec3 pos{0.5 + rng.uniform(-0.1, 0.1), 0.5 + rng.uniform(-0.1, 0.1),
                 0.5 + rng.uniform(-0.1, 0.1)};
        auto scene = voxelize(place_chair(pos, yaw, scale), G);
        auto region = voxels_from_grid(scene);

        auto p = fit_placement(canonical, region, G);
        CAPTURE(trial);
        CAPTURE(yaw);
        CHECK(std::abs(wrap_angle(p.yaw - yaw)) < 0.06);       // ~3.4 degrees
        CHECK(std::abs(p.scale - scale) < 0.02 * scale);
        CHECK((p.translation - pos).norm() < 0.8 / G);
    }
}

TEST_CASE("a voxel-aligned shift of the region moves only the translation") {
    const int G = 32;
    auto canonical = voxelize(chair_solid(), G, Frame::canonical);
    auto base_grid = voxelize(place_chair({0.45, 0.45, 0.45}, 0.6, 1.0), G);
    auto base = voxels_from_grid(base_grid);

    SparseVoxelSet shifted;
    const int dv = 3;
    for (const auto& v : base.positions) shifted.positions.push_back({v.h, v.w + dv, v.l});

    auto pa = fit_placement(canonical, base, G);
    auto pb = fit_placement(canonical, shifted, G);
    CHECK(pb.yaw == doctest::Approx(pa.yaw).epsilon(1e-9));
    CHECK(pb.scale == doctest::Approx(pa.scale).epsilon(1e-9));
    CHECK(pb.rms_error == doctest::Approx(pa.rms_error).epsilon(1e-9));
    CHECK(pb.translation.x - pa.translation.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(pb.translation.y - pa.translation.y == doctest::Approx(double(dv) / G));
    CHECK(pb.translation.z - pa.translation.z == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("fit_placement input validation") {
    const int G = 16;
    auto canonical = voxelize(chair_solid(), G, Frame::canonical);
    CHECK_THROWS_AS(fit_placement(canonical, SparseVoxelSet{}, G), DataError);
    CHECK_THROWS_AS(fit_placement(OccupancyGrid(G), voxels_from_grid(canonical), G), DataError);
}

TEST_CASE("symmetric objects still fit position and scale") {
    // square table: 4-fold symmetric about the vertical axis, yaw ambiguous
    Solid table;
    table.parts.push_back({{0.5, 0.5, 0.5}, {0.04, 0.3, 0.3}, 0.0});
    const int G = 32;
    auto canonical = voxelize(table, G, Frame::canonical);

    Solid moved;
    moved.parts.push_back({{0.45, 0.55, 0.5}, {0.04, 0.3, 0.3}, M_PI / 2});
    auto region = voxels_from_grid(voxelize(moved, G));

    auto p = fit_placement(canonical, region, G);
    CHECK(std::abs(p.translation.x - 0.45) < 0.02);
    CHECK(std::abs(p.translation.y - 0.55) < 0.02);
    CHECK(std::abs(p.translation.z - 0.5) < 0.02);
    CHECK(p.scale == doctest::Approx(1.0).epsilon(0.02));
    CHECK(p.rms_error < 1.5 / G);
}
