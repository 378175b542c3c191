#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lvg/common.hpp"
#include "lvg/latent.hpp"
#include "lvg/voxel.hpp"

using namespace lvg;

namespace {

OccupancyGrid random_grid(int g, uint64_t seed, double density = 0.5) {
    OccupancyGrid grid(g);
    Rng rng(seed);
    for (auto& c : grid.cells()) c = rng.uniform() < density ? 1 : 0;
    return grid;
}

// Snap a grid to patch granularity: a patch stays occupied only if its first
// voxel is, giving a decode(encode(.)) fixed point to test round trips with.
OccupancyGrid patch_aligned(int g, uint64_t seed) {
    OccupancyGrid grid(g);
    Rng rng(seed);
    int n = g / kPatchSize;
    for (int h = 0; h < n; ++h)
        for (int w = 0; w < n; ++w)
            for (int l = 0; l < n; ++l) {
                bool on = rng.uniform() < 0.5;
                for (int dh = 0; dh < kPatchSize; ++dh)
                    for (int dw = 0; dw < kPatchSize; ++dw)
                        for (int dl = 0; dl < kPatchSize; ++dl)
                            grid.set(h * kPatchSize + dh, w * kPatchSize + dw,
                                     l * kPatchSize + dl, on);
            }
    return grid;
}

}  // namespace

TEST_CASE("occupancy channel hits the interval endpoints") {
    OccupancyGrid full(8);
    for (auto& c : full.cells()) c = 1;
    auto lf = encode(full);
    CHECK(lf.H == 4);
    CHECK(lf.d == kLatentChannels);
    for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w)
            for (int l = 0; l < 4; ++l) CHECK(lf.at(h, w, l, 0) == 1.0f);

    auto le = encode(OccupancyGrid(8));
    for (int h = 0; h < 4; ++h)
        for (int w = 0; w < 4; ++w)
            for (int l = 0; l < 4; ++l) CHECK(le.at(h, w, l, 0) == -1.0f);
}

TEST_CASE("one occupied patch lights exactly one latent cell") {
    OccupancyGrid g(4);
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w)
            for (int l = 0; l < 2; ++l) g.set(h, w, l, true);
    auto lat = encode(g);
    REQUIRE(lat.cell_count() == 8);
    int positive = 0;
    for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 2; ++w)
            for (int l = 0; l < 2; ++l) {
                float v = lat.at(h, w, l, 0);
                if (v > 0) ++positive;
                CHECK((v == 1.0f || v == -1.0f));
            }
    CHECK(positive == 1);
    CHECK(lat.at(0, 0, 0, 0) == 1.0f);
}

TEST_CASE("encode rejects indivisible resolutions and oversized channel counts") {
    CHECK_THROWS_AS(encode(random_grid(6, 1), 4), DataError);
    CHECK_THROWS_AS(encode(random_grid(8, 1), 3), DataError);
    CHECK_THROWS_AS(encode(random_grid(8, 1), 2, kLatentChannels + 2), DataError);
}

TEST_CASE("latent values stay in the unit interval") {
    auto lat = encode(random_grid(16, 7));
    for (float v : lat.values) {
        CHECK(v >= -1.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("positional channels depend on the cell only, never on occupancy") {
    auto a = encode(random_grid(16, 11));
    auto b = encode(random_grid(16, 12));
    REQUIRE(a.same_shape(b));
    for (int h = 0; h < a.H; ++h)
        for (int w = 0; w < a.W; ++w)
            for (int l = 0; l < a.L; ++l)
                for (int ch = 1; ch < a.d; ++ch)
                    CHECK(a.at(h, w, l, ch) == b.at(h, w, l, ch));
    // and the whole encoding is deterministic
    CHECK(encode(random_grid(16, 11)) == a);
}

TEST_CASE("flipping one voxel moves one channel value by exactly a quarter") {
    auto base = random_grid(16, 21);
    auto flipped = base;
    flipped.set(5, 9, 2, !base.at(5, 9, 2));

    auto la = encode(base);
    auto lb = encode(flipped);
    size_t changed = la.index(5 / kPatchSize, 9 / kPatchSize, 2 / kPatchSize, 0);
    for (size_t i = 0; i < la.values.size(); ++i) {
        if (i == changed)
            CHECK(std::abs(la.values[i] - lb.values[i]) == 0.25f);  // 2 / P^3, exact in binary
        else
            CHECK(la.values[i] == lb.values[i]);
    }
}

TEST_CASE("decode emits whole patches above the threshold") {
    auto g = patch_aligned(8, 31);
    auto round = decode(encode(g), 8);
    CHECK(round == g);
    CHECK(iou(round, g) == 1.0);
}

TEST_CASE("decode then encode is a projection") {
    auto g = random_grid(16, 41, 0.4);
    auto once = decode(encode(g), 16);
    auto twice = decode(encode(once), 16);
    CHECK(twice == once);
}

TEST_CASE("decode validates dimensions") {
    auto lat = encode(random_grid(8, 51));
    CHECK_THROWS_AS(decode(lat, 16), DataError);
    CHECK_THROWS_AS(decode(lat, 8, 4), DataError);
}

TEST_CASE("latent arithmetic") {
    auto a = encode(random_grid(8, 61));
    auto b = encode(random_grid(8, 62));

    auto sum = lat_add(a, b);
    auto diff = lat_sub(sum, b);
    for (size_t i = 0; i < a.values.size(); ++i)
        CHECK(diff.values[i] == doctest::Approx(a.values[i]).epsilon(1e-6));

    auto twice = lat_scale(a, 2.0f);
    for (size_t i = 0; i < a.values.size(); ++i) CHECK(twice.values[i] == 2.0f * a.values[i]);

    CHECK(lat_mse(a, a) == 0.0);
    CHECK(lat_mean_abs(zeros_like(a)) == 0.0);
    CHECK(lat_mean_abs(lat_scale(a, -1.0f)) == doctest::Approx(lat_mean_abs(a)));

    LatentGrid other(2, 2, 2, 8);
    CHECK_THROWS_AS(lat_add(a, other), DataError);
    CHECK_THROWS_AS(lat_mse(a, other), DataError);
}

TEST_CASE("noise_like is seed-deterministic with roughly unit spread") {
    LatentGrid ref(4, 4, 4, 8);
    Rng r1(77), r2(77), r3(78);
    auto n1 = noise_like(ref, r1);
    auto n2 = noise_like(ref, r2);
    auto n3 = noise_like(ref, r3);
    CHECK(n1 == n2);
    CHECK(n1 != n3);

    double mean = 0, var = 0;
    for (float v : n1.values) mean += v;
    mean /= double(n1.size());
    for (float v : n1.values) var += (v - mean) * (v - mean);
    var /= double(n1.size());
    CHECK(std::abs(mean) < 0.15);
    CHECK(var == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("latent stream round trip is bitwise") {
    Rng rng(91);
    LatentGrid lat(3, 4, 5, 8);
    for (float& v : lat.values) v = float(rng.normal());

    std::stringstream ss;
    write_latent(ss, lat);
    LatentGrid back = read_latent(ss);
    CHECK(back == lat);

    SUBCASE("bad magic") {
        std::stringstream junk("LVGNOPE0aaaa");
        CHECK_THROWS_AS(read_latent(junk), DataError);
    }
    SUBCASE("truncated values") {
        std::string payload = ss.str();
        std::stringstream cut(payload.substr(0, payload.size() - 7));
        CHECK_THROWS_AS(read_latent(cut), DataError);
    }
}
