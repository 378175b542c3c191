#pragma once

#include <string>
#include <vector>

#include "lvg/common.hpp"

namespace lvg {

inline constexpr int kVocabSize = 4096;     // V
inline constexpr int kMaxCondTokens = 16;   // T_max
inline constexpr int kCondDim = 64;         // D_c

// Instruction embedding: a short sequence of fixed-width vectors, or the null
// flag standing in for the learned unconditional token.
struct ConditionEmbedding {
    std::vector<std::vector<float>> tokens;
    bool is_null = false;

    static ConditionEmbedding null_condition() {
        ConditionEmbedding c;
        c.is_null = true;
        return c;
    }

    int length() const { return int(tokens.size()); }
};

// Lowercase whitespace tokenization with punctuation stripped from token
// edges; empty result is an error.
std::vector<std::string> tokenize_instruction(const std::string& text);

// FNV-1a hash of each token into a V-bucket vocabulary, looked up in a
// frozen seed-deterministic table. Truncates to t_max tokens.
ConditionEmbedding embed_instruction(const std::string& text, int vocab = kVocabSize,
                                     int t_max = kMaxCondTokens, int cond_dim = kCondDim);

// Bucket index of one token (exposed so tests can check collision-freedom).
uint32_t token_bucket(const std::string& token, int vocab = kVocabSize);

}  // namespace lvg
