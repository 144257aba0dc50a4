#include "veye/policy.hpp"

#include "veye/errors.hpp"
#include "veye/rng.hpp"

#include <sstream>

namespace veye {

// Whitespace tokens, each hashed to a fixed pseudo-random embedding; rows
// beyond the text are zero padding.
LanguageEncoding encode_language(const std::string& text, int n_tokens, int embed_dim,
                                 std::uint64_t seed) {
    if (n_tokens <= 0 || embed_dim <= 0) {
        throw UsageError("encode_language: token count and embed dim must be positive");
    }
    LanguageEncoding enc;
    enc.tokens = MatrixX<double>::Zero(n_tokens, embed_dim);

    std::istringstream words(text);
    std::string word;
    int row = 0;
    while (row < n_tokens && words >> word) {
        std::uint64_t state = fnv1a64(word) ^ (seed * 0x9e3779b97f4a7c15ull);
        for (int j = 0; j < embed_dim; ++j) {
            const std::uint64_t bits = splitmix64(state);
            const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
            enc.tokens(row, j) = 0.2 * u - 0.1;
        }
        ++row;
    }
    return enc;
}

} // namespace veye
