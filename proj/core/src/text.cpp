#include "lvg/text.hpp"

#include <cctype>
#include <mutex>
#include <unordered_map>

namespace lvg {

std::vector<std::string> tokenize_instruction(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        size_t b = 0, e = cur.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) tokens.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return tokens;
}

uint32_t token_bucket(const std::string& token, int vocab) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : token) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return uint32_t(h % uint64_t(vocab));
}

namespace {

// Frozen embedding table, generated once per (vocab, cond_dim) pair.
const std::vector<float>& embedding_table(int vocab, int cond_dim) {
    static std::mutex mu;
    static std::unordered_map<uint64_t, std::vector<float>> cache;
    std::lock_guard<std::mutex> lock(mu);
    uint64_t key = (uint64_t(uint32_t(vocab)) << 32) | uint32_t(cond_dim);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    Rng rng(splitmix64(0x7e87ab1e5eedull ^ key));
    std::vector<float> table(size_t(vocab) * cond_dim);
    double scale = 1.0 / std::sqrt(double(cond_dim));
    for (float& v : table) v = float(rng.normal() * scale);
    return cache.emplace(key, std::move(table)).first->second;
}

}  // namespace

ConditionEmbedding embed_instruction(const std::string& text, int vocab, int t_max,
                                     int cond_dim) {
    if (text.empty()) throw DataError("embed_instruction: empty instruction");
    if (vocab < 1 || t_max < 1 || cond_dim < 1)
        throw ConfigError("embed_instruction: bad vocab/t_max/cond_dim");
    std::vector<std::string> words = tokenize_instruction(text);
    if (words.empty()) throw DataError("embed_instruction: instruction has no tokens");
    if (int(words.size()) > t_max) words.resize(t_max);

    const std::vector<float>& table = embedding_table(vocab, cond_dim);
    ConditionEmbedding out;
    out.tokens.reserve(words.size());
    for (const std::string& w : words) {
        uint32_t b = token_bucket(w, vocab);
        const float* row = table.data() + size_t(b) * cond_dim;
        out.tokens.emplace_back(row, row + cond_dim);
    }
    return out;
}

}  // namespace lvg
