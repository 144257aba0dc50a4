#pragma once

#include "veye/action_codec.hpp"
#include "veye/renderer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace veye {

template <typename T>
using MatrixX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int image_size = 224;
    int patch = 14;
    int n_image_tokens = 256;
    int n_lang_tokens = 77;
    int n_depth_tokens = 36;
    int layers = 8;
    int embed_dim = 64;
    int heads = 4;
    int hidden_dim = 128;
    int rot_bins_per_axis = 72;

    int grid() const { return image_size / patch; }
    int patch_dim() const { return patch * patch * 4; }  // r, g, b, depth per pixel
    int total_tokens() const { return n_image_tokens + n_lang_tokens + n_depth_tokens; }
    void validate() const;
};

// Deterministic stand-in for a pretrained text encoder: whitespace tokens
// hashed to fixed pseudo-random embeddings, padded/truncated to a fixed length.
struct LanguageEncoding {
    MatrixX<double> tokens;  // n_lang_tokens x embed_dim
};

LanguageEncoding encode_language(const std::string& text, int n_tokens, int embed_dim,
                                 std::uint64_t seed = 0);

// Named parameter tensors in a stable registration order.
template <typename T>
class ParamSet {
public:
    struct Entry {
        std::string name;
        MatrixX<T> value;
    };

    MatrixX<T>& add(const std::string& name, int rows, int cols);
    MatrixX<T>& at(const std::string& name);
    const MatrixX<T>& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    size_t total_elements() const;

    // Same shapes, zero values; used for gradient accumulators.
    ParamSet<T> zeros_like() const;
    void set_zero();

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (const Entry& e : entries_) {
            out.add(e.name, static_cast<int>(e.value.rows()), static_cast<int>(e.value.cols())) =
                e.value.template cast<U>();
        }
        return out;
    }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Per-term loss values. Every term is cross-entropy against its target with
// the target's self-entropy subtracted, so a perfect fit scores zero; for
// one-hot targets this equals plain cross-entropy.
struct LossBreakdown {
    double trans = 0.0;
    double rot = 0.0;  // sum over the three axes
    double open = 0.0;
    double collision = 0.0;
    double depth = 0.0;
    double dyn_inf = 0.0;
    std::array<double, 3> rot_axes{};

    double total() const { return trans + rot + open + collision + depth + dyn_inf; }
};

LossBreakdown loss(const PolicyOutputs& outputs, const EncodedActionTarget& target);

// Tokenized attention policy: [image tokens | language tokens | depth tokens]
// through pre-norm self-attention layers, then per-head readouts. All math is
// explicit so the backward pass can be verified against finite differences.
template <typename T>
class PolicyNet {
public:
    struct Activations;  // opaque cache carried from forward to backward

    PolicyNet() = default;
    PolicyNet(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

    // Patch matrix (n_image_tokens x patch_dim): rgb scaled to [0,1], depth
    // normalized by the view's depth window (background clamps to 1).
    static MatrixX<T> extract_patches(const VirtualImage& img, const DepthRange& range,
                                      const ModelConfig& cfg);

    PolicyOutputs forward(const VirtualImage& img, const DepthRange& range,
                          const LanguageEncoding& lang) const;
    PolicyOutputs forward_tokens(const MatrixX<T>& patches, const MatrixX<T>& lang_tokens,
                                 Activations* cache = nullptr) const;

    // Forward + loss + exact reverse-mode gradients accumulated into `grads`.
    LossBreakdown loss_and_grad(const MatrixX<T>& patches, const MatrixX<T>& lang_tokens,
                                const EncodedActionTarget& target, ParamSet<T>& grads) const;

    void save_checkpoint(const std::string& path) const;
    static PolicyNet<T> load_checkpoint(const std::string& path);

private:
    ModelConfig cfg_;
    ParamSet<T> params_;
};

using PolicyNetF = PolicyNet<float>;
using PolicyNetD = PolicyNet<double>;

} // namespace veye
