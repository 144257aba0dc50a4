#pragma once

#include "veye/policy.hpp"
#include "veye/train.hpp"

#include <cstdint>
#include <string>

namespace veye {

// Flat key-value run configuration. File grammar: one `key = value` per line,
// `#` starts a comment, blank lines ignored. Unknown keys are rejected.
// CLI `--set key=value` overrides win over the file.
class Config {
public:
    // llm
    std::string llm_endpoint;
    std::string llm_model = "gpt-4o";
    std::string llm_api_key_env = "OPENAI_API_KEY";
    // view
    double view_distance = 0.0;     // 0 derives 1.2 x workspace diagonal
    double view_half_extent = 0.0;  // 0 derives 0.5 x workspace diagonal
    int view_resolution = 224;
    int view_max_retries = 2;
    // codec
    double codec_sigma_px = 1.5;
    // keypointing
    double keypoint_vel_eps = 1e-3;
    int keypoint_min_gap = 2;
    // model widths
    int model_patch = 14;
    int model_layers = 8;
    int model_embed_dim = 64;
    int model_heads = 4;
    int model_hidden_dim = 128;
    int model_n_lang_tokens = 77;
    int model_n_depth_tokens = 36;
    int model_rot_bins = 72;
    // optimizer
    OptimizerSettings opt;
    // training
    int train_steps = 1000;
    int train_batch = 8;
    double train_stop_below = 0.0;
    int train_check_every = 25;
    // coarse-to-fine
    double zoom_factor = 4.0;
    std::string c2f_mode = "dynamic";  // dynamic | always | never
    // root seed; every module stream derives from it by labeled hashing
    std::uint64_t seed = 0;

    static Config load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void apply_override(const std::string& key_equals_value);

    // Model sized to the configured view resolution.
    ModelConfig model_config() const;
    TrainSettings train_settings(const std::string& metrics_csv) const;
};

} // namespace veye
