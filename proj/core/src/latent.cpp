#include "lvg/latent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

namespace lvg {

namespace {

// Frozen carrier-wave table for channels 1..d-1: per channel a direction,
// frequency and phase drawn once from a fixed seed. Values are sin() of a
// smooth scalar field over normalized cell coordinates, so they stay in
// [-1,1] and are identical across runs by construction.
struct Carrier {
    double ax, ay, az, freq, phase;
};

std::vector<Carrier> carrier_table(int channels) {
    Rng rng(0x1a7e57c0de5eedull);
    std::vector<Carrier> table(channels);
    for (auto& c : table) {
        c.ax = rng.uniform(-1.0, 1.0);
        c.ay = rng.uniform(-1.0, 1.0);
        c.az = rng.uniform(-1.0, 1.0);
        c.freq = rng.uniform(1.5, 9.0);
        c.phase = rng.uniform(0.0, 6.283185307179586);
    }
    return table;
}

}  // namespace

LatentGrid encode(const OccupancyGrid& grid, int patch_size, int channels) {
    int g = grid.resolution();
    if (patch_size < 1 || g % patch_size != 0)
        throw DataError("encode: resolution not divisible by patch size");
    int n = g / patch_size;
    LatentGrid latent(n, n, n, channels);
    int patch_cells = patch_size * patch_size * patch_size;
    static const std::vector<Carrier> carriers = carrier_table(kLatentChannels);
    if (channels > int(carriers.size()) + 1)
        throw DataError("encode: channel count exceeds carrier table");

    for (int h = 0; h < n; ++h)
        for (int w = 0; w < n; ++w)
            for (int l = 0; l < n; ++l) {
                int occ = 0;
                for (int dh = 0; dh < patch_size; ++dh)
                    for (int dw = 0; dw < patch_size; ++dw)
                        for (int dl = 0; dl < patch_size; ++dl)
                            occ += grid.at(h * patch_size + dh, w * patch_size + dw,
                                           l * patch_size + dl);
                latent.at(h, w, l, 0) = 2.0f * float(occ) / float(patch_cells) - 1.0f;
                double u = (h + 0.5) / n, v = (w + 0.5) / n, q = (l + 0.5) / n;
                for (int ch = 1; ch < channels; ++ch) {
                    const Carrier& cr = carriers[ch - 1];
                    double s = cr.ax * u + cr.ay * v + cr.az * q;
                    latent.at(h, w, l, ch) = float(std::sin(cr.freq * s + cr.phase));
                }
            }
    return latent;
}

OccupancyGrid decode(const LatentGrid& latent, int resolution, int patch_size, float threshold) {
    if (latent.H * patch_size != resolution || latent.W * patch_size != resolution ||
        latent.L * patch_size != resolution)
        throw DataError("decode: latent dims do not match resolution");
    OccupancyGrid grid(resolution);
    for (int h = 0; h < latent.H; ++h)
        for (int w = 0; w < latent.W; ++w)
            for (int l = 0; l < latent.L; ++l) {
                if (!(latent.at(h, w, l, 0) > threshold)) continue;
                for (int dh = 0; dh < patch_size; ++dh)
                    for (int dw = 0; dw < patch_size; ++dw)
                        for (int dl = 0; dl < patch_size; ++dl)
                            grid.set(h * patch_size + dh, w * patch_size + dw,
                                     l * patch_size + dl, true);
            }
    return grid;
}

LatentGrid zeros_like(const LatentGrid& ref) { return LatentGrid(ref.H, ref.W, ref.L, ref.d); }

LatentGrid noise_like(const LatentGrid& ref, Rng& rng) {
    LatentGrid out(ref.H, ref.W, ref.L, ref.d);
    for (float& v : out.values) v = float(rng.normal());
    return out;
}

namespace {

void check_shapes(const LatentGrid& a, const LatentGrid& b, const char* op) {
    if (!a.same_shape(b)) throw DataError(std::string(op) + ": latent shape mismatch");
}

}  // namespace

LatentGrid lat_add(const LatentGrid& a, const LatentGrid& b) {
    check_shapes(a, b, "lat_add");
    LatentGrid out = a;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
}

LatentGrid lat_sub(const LatentGrid& a, const LatentGrid& b) {
    check_shapes(a, b, "lat_sub");
    LatentGrid out = a;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

LatentGrid lat_scale(const LatentGrid& a, float s) {
    LatentGrid out = a;
    for (float& v : out.values) v *= s;
    return out;
}

double lat_mean_abs(const LatentGrid& a) {
    if (a.values.empty()) throw DataError("lat_mean_abs: empty latent");
    double acc = 0;
    for (float v : a.values) acc += std::abs(double(v));
    return acc / double(a.values.size());
}

double lat_mse(const LatentGrid& a, const LatentGrid& b) {
    check_shapes(a, b, "lat_mse");
    double acc = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        double d = double(a.values[i]) - double(b.values[i]);
        acc += d * d;
    }
    return acc / double(a.values.size());
}

namespace {

constexpr char kLatMagic[8] = {'L', 'V', 'G', 'L', 'A', 'T', '1', '\0'};

void put_f32le(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    char b[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                 char((bits >> 24) & 0xff)};
    out.write(b, 4);
}

float get_f32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("latent stream: truncated");
    uint32_t bits =
        uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void write_latent(std::ostream& out, const LatentGrid& latent) {
    if (latent.H > 255 || latent.W > 255 || latent.L > 255 || latent.d > 255)
        throw DataError("write_latent: dimensions must fit in a byte");
    out.write(kLatMagic, 8);
    char dims[4] = {char(uint8_t(latent.H)), char(uint8_t(latent.W)), char(uint8_t(latent.L)),
                    char(uint8_t(latent.d))};
    out.write(dims, 4);
    for (float v : latent.values) put_f32le(out, v);
    if (!out) throw DataError("write_latent: stream failure");
}

LatentGrid read_latent(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || !std::equal(magic, magic + 8, kLatMagic)) throw DataError("read_latent: bad magic");
    unsigned char dims[4];
    in.read(reinterpret_cast<char*>(dims), 4);
    if (!in) throw DataError("read_latent: truncated header");
    if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[3] == 0)
        throw DataError("read_latent: zero dimension");
    LatentGrid latent(dims[0], dims[1], dims[2], dims[3]);
    for (float& v : latent.values) v = get_f32le(in);
    return latent;
}

void save_latent(const std::string& path, const LatentGrid& latent) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_latent: cannot open " + path);
    write_latent(f, latent);
}

LatentGrid load_latent(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_latent: cannot open " + path);
    return read_latent(f);
}

}  // namespace lvg
