#include "lvg/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lvg/common.hpp"

namespace lvg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    auto& v = c.values_;
    v["seed"] = "0";
    v["data.dir"] = "data";
    v["data.train_scenes"] = "1024";
    v["data.val_scenes"] = "64";
    v["data.test_scenes"] = "128";
    v["grid.resolution"] = "16";
    v["codec.d"] = "8";
    v["codec.patch"] = "2";
    v["model.width"] = "64";
    v["model.layers"] = "4";
    v["model.heads"] = "4";
    v["model.head_dim"] = "16";
    v["model.vocab"] = "4096";
    v["model.t_max"] = "64";
    v["model.cond_dim"] = "64";
    v["flow.cfg_weight"] = "3.0";
    v["flow.num_steps"] = "50";
    v["train.steps"] = "2000";
    v["train.batch_size"] = "1";
    v["train.lr"] = "1e-3";
    v["train.beta1"] = "0.9";
    v["train.beta2"] = "0.999";
    v["train.weight_decay"] = "0.0";
    v["train.drop_rate"] = "0.1";
    v["distill.T"] = "4";
    v["distill.steps"] = "200";
    v["distill.lr_student"] = "2e-6";
    v["distill.lr_critic"] = "5e-7";
    v["distill.beta1"] = "0.0";
    v["distill.beta2"] = "0.999";
    v["distill.weight_decay"] = "0.01";
    v["distill.ratio"] = "5";
    v["distill.cfg_weight"] = "3.0";
    v["icp.max_iterations"] = "50";
    v["icp.tolerance"] = "1e-6";
    v["icp.yaw_candidates"] = "8";
    v["icp.max_points"] = "512";
    v["metrics.tau"] = "1.0";  // voxel units; world tau = value / grid.resolution
    v["metrics.delta_pos"] = "0.05";
    v["metrics.delta_yaw_deg"] = "15.0";
    v["eval.min_objects"] = "8";
    v["eval.max_objects"] = "10";
    v["eval.bootstrap"] = "1000";
    return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    it->second = value;
}

const std::string& RunConfig::get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: " + key);
    return it->second;
}

int RunConfig::get_int(const std::string& key) const {
    const std::string& s = get_str(key);
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not an integer: '" + s + "'");
    }
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& s = get_str(key);
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not an unsigned integer: '" + s + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& s = get_str(key);
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " is not a number: '" + s + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& s = get_str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key " + key + " is not a boolean: '" + s + "'");
}

std::string RunConfig::resolved() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
}

void parse_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": missing '='");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (value.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty value for " + key);
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    RunConfig cfg = defaults();
    parse_config_text(cfg, ss.str(), path);
    return cfg;
}

}  // namespace lvg
