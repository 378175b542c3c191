#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace lvg {

// Flat "key = value" run configuration. Every key must exist in the default
// table; unknown keys are rejected at parse time. Values stay as strings
// until a typed getter is called.
class RunConfig {
public:
    static RunConfig defaults();
    // Defaults overlaid with the file's assignments. '#' starts a comment.
    static RunConfig from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool known(const std::string& key) const { return values_.count(key) != 0; }

    const std::string& get_str(const std::string& key) const;
    int get_int(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Fully resolved "key = value" lines, sorted by key.
    std::string resolved() const;

private:
    std::map<std::string, std::string> values_;
};

void parse_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);

}  // namespace lvg
