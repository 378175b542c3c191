#pragma once

#include <cmath>
#include <vector>

#include "lvg/common.hpp"
#include "lvg/tensor.hpp"

namespace lvg {

// Token position for identity-aware rotary attention: f=0 marks noisy-latent
// and scene-state tokens, f=1 marks object tokens; (h,w,l) are cell indices.
struct TokenPosition {
    int f = 0;
    int h = 0, w = 0, l = 0;
};

// The D_h/2 rotation slots split into four equal contiguous bands assigned to
// f, h, w, l. Within a band, slot k rotates by coord * 10000^(-2k/band_width).
inline std::vector<double> rope_angles(const TokenPosition& pos, int head_dim) {
    if (head_dim % 8 != 0 || head_dim <= 0)
        throw DataError("rope_angles: head dim must be a positive multiple of 8");
    int slots = head_dim / 2;
    int band = slots / 4;
    const int coords[4] = {pos.f, pos.h, pos.w, pos.l};
    std::vector<double> angles(slots);
    for (int b = 0; b < 4; ++b)
        for (int k = 0; k < band; ++k)
            angles[b * band + k] = coords[b] * std::pow(10000.0, -2.0 * k / band);
    return angles;
}

// Per-token cos/sin tables, [n_tokens x head_dim/2]; shared across heads.
template <typename T>
void build_rope_tables(const std::vector<TokenPosition>& positions, int head_dim, Tensor<T>& cs,
                       Tensor<T>& sn) {
    int slots = head_dim / 2;
    cs = Tensor<T>(int(positions.size()), slots);
    sn = Tensor<T>(int(positions.size()), slots);
    for (size_t r = 0; r < positions.size(); ++r) {
        std::vector<double> angles = rope_angles(positions[r], head_dim);
        for (int k = 0; k < slots; ++k) {
            cs.at(int(r), k) = T(std::cos(angles[k]));
            sn.at(int(r), k) = T(std::sin(angles[k]));
        }
    }
}

}  // namespace lvg
