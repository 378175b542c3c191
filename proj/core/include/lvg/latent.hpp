#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lvg/common.hpp"
#include "lvg/voxel.hpp"

namespace lvg {

inline constexpr int kPatchSize = 2;       // P_e: occupancy voxels per latent cell edge
inline constexpr int kLatentChannels = 8;  // d
inline constexpr float kDecodeThreshold = 0.0f;

// Dense latent field over an (H, W, L) cell grid, d channels per cell,
// row-major (h, w, l, channel) order.
struct LatentGrid {
    int H = 0, W = 0, L = 0, d = 0;
    std::vector<float> values;

    LatentGrid() = default;
    LatentGrid(int h, int w, int l, int channels)
        : H(h), W(w), L(l), d(channels), values(size_t(h) * w * l * channels, 0.0f) {
        if (h < 1 || w < 1 || l < 1 || channels < 1)
            throw DataError("LatentGrid: dimensions must be positive");
    }

    int cell_count() const { return H * W * L; }  // N
    size_t size() const { return values.size(); }

    size_t index(int h, int w, int l, int ch) const {
        return ((size_t(h) * W + w) * L + l) * d + ch;
    }
    float& at(int h, int w, int l, int ch) { return values[index(h, w, l, ch)]; }
    const float& at(int h, int w, int l, int ch) const { return values[index(h, w, l, ch)]; }

    bool same_shape(const LatentGrid& o) const {
        return H == o.H && W == o.W && L == o.L && d == o.d;
    }

    bool operator==(const LatentGrid&) const = default;
};

// Patch-pooling encoder. Channel 0 carries occupancy (2*fraction - 1); the
// remaining channels are fixed smooth positional carriers in [-1,1].
LatentGrid encode(const OccupancyGrid& grid, int patch_size = kPatchSize,
                  int channels = kLatentChannels);

// Threshold decoder: cells with channel 0 > theta emit their patch occupied.
OccupancyGrid decode(const LatentGrid& latent, int resolution, int patch_size = kPatchSize,
                     float threshold = kDecodeThreshold);

LatentGrid zeros_like(const LatentGrid& ref);
LatentGrid noise_like(const LatentGrid& ref, Rng& rng);

// a + b, a - b, a * s elementwise; shape-checked.
LatentGrid lat_add(const LatentGrid& a, const LatentGrid& b);
LatentGrid lat_sub(const LatentGrid& a, const LatentGrid& b);
LatentGrid lat_scale(const LatentGrid& a, float s);
double lat_mean_abs(const LatentGrid& a);
double lat_mse(const LatentGrid& a, const LatentGrid& b);

// LVGLAT1 stream: magic "LVGLAT1\0", u8 H, u8 W, u8 L, u8 d, f32le values.
void write_latent(std::ostream& out, const LatentGrid& latent);
LatentGrid read_latent(std::istream& in);
void save_latent(const std::string& path, const LatentGrid& latent);
LatentGrid load_latent(const std::string& path);

}  // namespace lvg
