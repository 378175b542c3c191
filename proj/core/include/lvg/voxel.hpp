#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lvg/common.hpp"

namespace lvg {

// World convention: the unit cube [0,1]^3, x vertical (up), y/z horizontal.
// Grid axis order is (h, w, l) <-> world (x, y, z); voxel (h,w,l) covers
// [h/G,(h+1)/G) x [w/G,(w+1)/G) x [l/G,(l+1)/G).
struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

// Rotation about the vertical (x) axis, +y toward +z.
inline Vec3 rotate_yaw(const Vec3& p, double yaw) {
    double c = std::cos(yaw), s = std::sin(yaw);
    return {p.x, c * p.y - s * p.z, s * p.y + c * p.z};
}

// Cuboid with arbitrary center, half-extents and yaw about the vertical axis.
struct OrientedCuboid {
    Vec3 center;
    Vec3 half;   // half-extents along the cuboid's local axes
    double yaw = 0.0;

    bool contains(const Vec3& p) const {
        Vec3 q = rotate_yaw(p - center, -yaw);
        return std::abs(q.x) <= half.x && std::abs(q.y) <= half.y && std::abs(q.z) <= half.z;
    }

    // axis-aligned bounds (world frame)
    void bounds(Vec3& lo, Vec3& hi) const;
};

// Union of oriented cuboids; the analytic solid fed to the voxelizer.
struct Solid {
    std::vector<OrientedCuboid> parts;

    bool contains(const Vec3& p) const {
        for (const auto& c : parts)
            if (c.contains(p)) return true;
        return false;
    }
    bool empty() const { return parts.empty(); }
    void bounds(Vec3& lo, Vec3& hi) const;
};

enum class Frame : uint8_t { scene = 0, canonical = 1 };

struct Voxel {
    int h = 0, w = 0, l = 0;
    bool operator==(const Voxel&) const = default;
    auto operator<=>(const Voxel&) const = default;
};

class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(int resolution, Frame frame = Frame::scene)
        : res_(resolution), frame_(frame), cells_(size_t(resolution) * resolution * resolution, 0) {
        if (resolution < 1) throw DataError("OccupancyGrid: resolution must be >= 1");
    }

    int resolution() const { return res_; }
    Frame frame() const { return frame_; }
    void set_frame(Frame f) { frame_ = f; }
    size_t cell_count() const { return cells_.size(); }

    size_t index(int h, int w, int l) const {
        return (size_t(h) * res_ + w) * res_ + l;
    }
    bool inside(int h, int w, int l) const {
        return h >= 0 && h < res_ && w >= 0 && w < res_ && l >= 0 && l < res_;
    }
    bool at(int h, int w, int l) const { return cells_[index(h, w, l)] != 0; }
    void set(int h, int w, int l, bool v) { cells_[index(h, w, l)] = v ? 1 : 0; }

    Vec3 voxel_center(int h, int w, int l) const {
        double g = res_;
        return {(h + 0.5) / g, (w + 0.5) / g, (l + 0.5) / g};
    }

    size_t occupied_count() const;
    bool empty_grid() const { return occupied_count() == 0; }

    const std::vector<uint8_t>& cells() const { return cells_; }
    std::vector<uint8_t>& cells() { return cells_; }

    bool operator==(const OccupancyGrid&) const = default;

private:
    int res_ = 0;
    Frame frame_ = Frame::scene;
    std::vector<uint8_t> cells_;
};

// Active voxel positions, strictly increasing in row-major order.
struct SparseVoxelSet {
    std::vector<Voxel> positions;

    size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
};

struct PointCloud {
    std::vector<Vec3> points;

    size_t size() const { return points.size(); }
};

// A voxel is occupied iff its center lies inside the solid. Rejects solids
// that reach outside the unit cube.
OccupancyGrid voxelize(const Solid& shape, int resolution, Frame frame = Frame::scene);

// Positions occupied in `after` and unoccupied in `before`.
SparseVoxelSet grid_difference(const OccupancyGrid& after, const OccupancyGrid& before);

// Centers of occupied voxels with at least one unoccupied 6-neighbor
// (out-of-bounds counts as unoccupied). Errors on an empty grid.
PointCloud surface_points(const OccupancyGrid& grid);

// Surface voxel centers of a sparse region, neighbor test against the region
// itself (used to fit placements to scene differences).
PointCloud region_surface_points(const SparseVoxelSet& region, int resolution);

// |a n b| / |a u b|; 1.0 when both grids are empty.
double iou(const OccupancyGrid& a, const OccupancyGrid& b);

// Occupancy for a voxel position list.
OccupancyGrid grid_from_voxels(const SparseVoxelSet& voxels, int resolution,
                               Frame frame = Frame::scene);
SparseVoxelSet voxels_from_grid(const OccupancyGrid& grid);

// LVGOCC1 run-length stream: magic "LVGOCC1\0", u8 resolution, then
// (u8 value, u32le run length) pairs covering all G^3 cells row-major.
void write_occupancy(std::ostream& out, const OccupancyGrid& grid);
OccupancyGrid read_occupancy(std::istream& in);
void save_occupancy(const std::string& path, const OccupancyGrid& grid);
OccupancyGrid load_occupancy(const std::string& path);

// ASCII PLY, one vertex line "x y z" per point.
void write_ply(std::ostream& out, const PointCloud& cloud);
void save_ply(const std::string& path, const PointCloud& cloud);

}  // namespace lvg
