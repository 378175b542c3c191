#include "lvg/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace lvg {

namespace {

constexpr char kCkptMagic[8] = {'L', 'V', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kCkptVersion = 1;

void put_u16le(std::ostream& out, uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    out.write(b, 2);
}

void put_u32le(std::ostream& out, uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.write(b, 4);
}

uint16_t get_u16le(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw DataError("checkpoint: truncated");
    return uint16_t(b[0] | (b[1] << 8));
}

uint32_t get_u32le(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("checkpoint: truncated");
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

std::string config_block(const ModelConfig& cfg) {
    std::ostringstream s;
    s << "width=" << cfg.width << "\n";
    s << "layers=" << cfg.layers << "\n";
    s << "heads=" << cfg.heads << "\n";
    s << "head_dim=" << cfg.head_dim << "\n";
    s << "vocab=" << cfg.vocab << "\n";
    s << "t_max=" << cfg.t_max << "\n";
    s << "cond_dim=" << cfg.cond_dim << "\n";
    s << "latent_channels=" << cfg.latent_channels << "\n";
    return s.str();
}

ModelConfig parse_config_block(const std::string& block) {
    std::map<std::string, int> kv;
    std::istringstream s(block);
    std::string line;
    while (std::getline(s, line)) {
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint config: missing '=' in " + line);
        std::string key = line.substr(0, eq);
        try {
            kv[key] = std::stoi(line.substr(eq + 1));
        } catch (const std::exception&) {
            throw DataError("checkpoint config: bad value in " + line);
        }
    }
    ModelConfig cfg;
    std::set<std::string> known;
    auto take = [&](const char* key, int& field) {
        known.insert(key);
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(std::string("checkpoint config: missing ") + key);
        field = it->second;
    };
    take("width", cfg.width);
    take("layers", cfg.layers);
    take("heads", cfg.heads);
    take("head_dim", cfg.head_dim);
    take("vocab", cfg.vocab);
    take("t_max", cfg.t_max);
    take("cond_dim", cfg.cond_dim);
    take("latent_channels", cfg.latent_channels);
    for (const auto& [key, _] : kv)
        if (!known.count(key)) throw DataError("checkpoint config: unknown key " + key);
    cfg.validate();
    return cfg;
}

}  // namespace

void write_model(std::ostream& out, const Model<float>& model) {
    out.write(kCkptMagic, 8);
    put_u32le(out, kCkptVersion);
    std::string cfg = config_block(model.config);
    put_u32le(out, uint32_t(cfg.size()));
    out.write(cfg.data(), std::streamsize(cfg.size()));
    for (const auto& e : model.params.entries()) {
        if (e.name.size() > 0xffff) throw DataError("write_model: name too long");
        put_u16le(out, uint16_t(e.name.size()));
        out.write(e.name.data(), std::streamsize(e.name.size()));
        char rank = 2;
        out.write(&rank, 1);
        put_u32le(out, uint32_t(e.value.rows));
        put_u32le(out, uint32_t(e.value.cols));
        static_assert(sizeof(float) == 4);
        for (float v : e.value.data) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32le(out, bits);
        }
    }
    if (!out) throw DataError("write_model: stream failure");
}

Model<float> read_model(std::istream& in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw DataError("read_model: bad magic");
    uint32_t version = get_u32le(in);
    if (version != kCkptVersion) throw DataError("read_model: unsupported version");
    uint32_t cfg_len = get_u32le(in);
    if (cfg_len > (1u << 20)) throw DataError("read_model: config block too large");
    std::string block(cfg_len, '\0');
    in.read(block.data(), cfg_len);
    if (!in) throw DataError("read_model: truncated config block");
    ModelConfig cfg = parse_config_block(block);

    Model<float> model = init_model<float>(cfg, 0);
    std::set<std::string> seen;
    while (true) {
        int peek = in.peek();
        if (peek == std::char_traits<char>::eof()) break;
        uint16_t name_len = get_u16le(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("read_model: truncated tensor name");
        char rank;
        in.read(&rank, 1);
        if (!in || (rank != 1 && rank != 2)) throw DataError("read_model: bad tensor rank");
        uint32_t rows = 1, cols;
        if (rank == 2) {
            rows = get_u32le(in);
            cols = get_u32le(in);
        } else {
            cols = get_u32le(in);
        }
        if (!model.params.has(name)) throw DataError("read_model: unknown tensor " + name);
        Tensor<float>& dst = model.params.value(name);
        if (dst.rows != int(rows) || dst.cols != int(cols))
            throw DataError("read_model: shape mismatch for " + name);
        for (float& v : dst.data) {
            uint32_t bits = get_u32le(in);
            std::memcpy(&v, &bits, 4);
        }
        if (!seen.insert(name).second) throw DataError("read_model: duplicate tensor " + name);
    }
    for (const auto& e : model.params.entries())
        if (!seen.count(e.name)) throw DataError("read_model: missing tensor " + e.name);
    model.params.check_finite("read_model");
    return model;
}

void save_model(const std::string& path, const Model<float>& model) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("save_model: cannot open " + path);
    write_model(f, model);
}

Model<float> load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("load_model: cannot open " + path);
    return read_model(f);
}

}  // namespace lvg
