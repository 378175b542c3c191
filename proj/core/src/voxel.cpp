#include "lvg/voxel.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace lvg {

namespace {

constexpr double kBoundsEps = 1e-9;

void expand(Vec3& lo, Vec3& hi, const Vec3& p) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    lo.z = std::min(lo.z, p.z);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
    hi.z = std::max(hi.z, p.z);
}

}  // namespace

void OrientedCuboid::bounds(Vec3& lo, Vec3& hi) const {
    lo = {1e30, 1e30, 1e30};
    hi = {-1e30, -1e30, -1e30};
    for (int i = 0; i < 8; ++i) {
        Vec3 corner{(i & 1) ? half.x : -half.x, (i & 2) ? half.y : -half.y,
                    (i & 4) ? half.z : -half.z};
        expand(lo, hi, rotate_yaw(corner, yaw) + center);
    }
}

void Solid::bounds(Vec3& lo, Vec3& hi) const {
    if (parts.empty()) throw DataError("Solid::bounds: empty solid");
    lo = {1e30, 1e30, 1e30};
    hi = {-1e30, -1e30, -1e30};
    for (const auto& c : parts) {
        Vec3 clo, chi;
        c.bounds(clo, chi);
        expand(lo, hi, clo);
        expand(lo, hi, chi);
    }
}

size_t OccupancyGrid::occupied_count() const {
    size_t n = 0;
    for (uint8_t c : cells_) n += c;
    return n;
}

OccupancyGrid voxelize(const Solid& shape, int resolution, Frame frame) {
    if (resolution < 2) throw DataError("voxelize: resolution must be >= 2");
    OccupancyGrid grid(resolution, frame);
    if (shape.empty()) return grid;

    Vec3 lo, hi;
    shape.bounds(lo, hi);
    if (lo.x < -kBoundsEps || lo.y < -kBoundsEps || lo.z < -kBoundsEps ||
        hi.x > 1 + kBoundsEps || hi.y > 1 + kBoundsEps || hi.z > 1 + kBoundsEps)
        throw DataError("voxelize: shape exceeds the unit cube");

    double g = resolution;
    auto clamp_cell = [&](double v) {
        return std::clamp(int(std::floor(v * g)), 0, resolution - 1);
    };
    int h0 = clamp_cell(lo.x), h1 = clamp_cell(hi.x);
    int w0 = clamp_cell(lo.y), w1 = clamp_cell(hi.y);
    int l0 = clamp_cell(lo.z), l1 = clamp_cell(hi.z);
    for (int h = h0; h <= h1; ++h)
        for (int w = w0; w <= w1; ++w)
            for (int l = l0; l <= l1; ++l)
                if (shape.contains(grid.voxel_center(h, w, l))) grid.set(h, w, l, true);
    return grid;
}

SparseVoxelSet grid_difference(const OccupancyGrid& after, const OccupancyGrid& before) {
    if (after.resolution() != before.resolution())
        throw DataError("grid_difference: resolution mismatch");
    SparseVoxelSet out;
    int g = after.resolution();
    for (int h = 0; h < g; ++h)
        for (int w = 0; w < g; ++w)
            for (int l = 0; l < g; ++l)
                if (after.at(h, w, l) && !before.at(h, w, l)) out.positions.push_back({h, w, l});
    return out;
}

PointCloud surface_points(const OccupancyGrid& grid) {
    if (grid.empty_grid()) throw DataError("surface_points: empty grid");
    PointCloud out;
    int g = grid.resolution();
    auto occupied = [&](int h, int w, int l) {
        return grid.inside(h, w, l) && grid.at(h, w, l);
    };
    for (int h = 0; h < g; ++h)
        for (int w = 0; w < g; ++w)
            for (int l = 0; l < g; ++l) {
                if (!grid.at(h, w, l)) continue;
                bool surface = !occupied(h - 1, w, l) || !occupied(h + 1, w, l) ||
                               !occupied(h, w - 1, l) || !occupied(h, w + 1, l) ||
                               !occupied(h, w, l - 1) || !occupied(h, w, l + 1);
                if (surface) out.points.push_back(grid.voxel_center(h, w, l));
            }
    return out;
}

PointCloud region_surface_points(const SparseVoxelSet& region, int resolution) {
    if (region.empty()) throw DataError("region_surface_points: empty region");
    OccupancyGrid grid = grid_from_voxels(region, resolution);
    return surface_points(grid);
}

double iou(const OccupancyGrid& a, const OccupancyGrid& b) {
    if (a.resolution() != b.resolution()) throw DataError("iou: resolution mismatch");
    size_t inter = 0, uni = 0;
    const auto& ca = a.cells();
    const auto& cb = b.cells();
    for (size_t i = 0; i < ca.size(); ++i) {
        bool x = ca[i] != 0, y = cb[i] != 0;
        inter += (x && y);
        uni += (x || y);
    }
    if (uni == 0) return 1.0;
    return double(inter) / double(uni);
}

OccupancyGrid grid_from_voxels(const SparseVoxelSet& voxels, int resolution, Frame frame) {
    OccupancyGrid grid(resolution, frame);
    for (const Voxel& v : voxels.positions) {
        if (!grid.inside(v.h, v.w, v.l)) throw DataError("grid_from_voxels: voxel out of range");
        grid.set(v.h, v.w, v.l, true);
    }
    return grid;
}

SparseVoxelSet voxels_from_grid(const OccupancyGrid& grid) {
    SparseVoxelSet out;
    int g = grid.resolution();
    for (int h = 0; h < g; ++h)
        for (int w = 0; w < g; ++w)
            for (int l = 0; l < g; ++l)
                if (grid.at(h, w, l)) out.positions.push_back({h, w, l});
    return out;
}

namespace {

void put_u32le(std::ostream& out, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.write(b, 4);
}

uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("occupancy stream: truncated");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

constexpr char kOccMagic[8] = {'L', 'V', 'G', 'O', 'C', 'C', '1', '\0'};

}  // namespace

void write_occupancy(std::ostream& out, const OccupancyGrid& grid) {
    if (grid.resolution() < 1 || grid.resolution() > 255)
        throw DataError("write_occupancy: resolution must fit in a byte");
    out.write(kOccMagic, 8);
    char res = char(uint8_t(grid.resolution()));
    out.write(&res, 1);
    const auto& cells = grid.cells();
    size_t i = 0;
    while (i < cells.size()) {
        uint8_t v = cells[i];
        size_t j = i;
        while (j < cells.size() && cells[j] == v) ++j;
        char vc = char(v);
        out.write(&vc, 1);
        put_u32le(out, uint32_t(j - i));
        i = j;
    }
    if (!out) throw DataError("write_occupancy: stream failure");
}

OccupancyGrid read_occupancy(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, kOccMagic))
        throw DataError("read_occupancy: bad magic");
    unsigned char res;
    in.read(reinterpret_cast<char*>(&res), 1);
    if (!in || res == 0) throw DataError("read_occupancy: bad resolution");
    OccupancyGrid grid(res);
    auto& cells = grid.cells();
    size_t filled = 0;
    while (filled < cells.size()) {
        char v;
        in.read(&v, 1);
        if (!in) throw DataError("read_occupancy: truncated run stream");
        uint32_t count = get_u32le(in);
        if (count == 0 || filled + count > cells.size())
            throw DataError("read_occupancy: run overflows grid");
        std::fill(cells.begin() + filled, cells.begin() + filled + count, uint8_t(v != 0));
        filled += count;
    }
    return grid;
}

void save_occupancy(const std::string& path, const OccupancyGrid& grid) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_occupancy: cannot open " + path);
    write_occupancy(f, grid);
}

OccupancyGrid load_occupancy(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_occupancy: cannot open " + path);
    return read_occupancy(f);
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "end_header\n";
    char line[96];
    for (const Vec3& p : cloud.points) {
        std::snprintf(line, sizeof(line), "%.8g %.8g %.8g\n", p.x, p.y, p.z);
        out << line;
    }
    if (!out) throw DataError("write_ply: stream failure");
}

void save_ply(const std::string& path, const PointCloud& cloud) {
    std::ofstream f(path);
    if (!f) throw DataError("save_ply: cannot open " + path);
    write_ply(f, cloud);
}

}  // namespace lvg
