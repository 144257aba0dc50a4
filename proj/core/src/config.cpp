#include "veye/config.hpp"

#include "veye/errors.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace veye {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' expects an unsigned integer, got '" + value + "'");
    }
}

} // namespace

void Config::set(const std::string& key, const std::string& value) {
    if (key == "llm.endpoint") llm_endpoint = value;
    else if (key == "llm.model") llm_model = value;
    else if (key == "llm.api_key_env") llm_api_key_env = value;
    else if (key == "view.distance") view_distance = parse_double(key, value);
    else if (key == "view.half_extent") view_half_extent = parse_double(key, value);
    else if (key == "view.resolution") view_resolution = parse_int(key, value);
    else if (key == "view.max_retries") view_max_retries = parse_int(key, value);
    else if (key == "codec.sigma_px") codec_sigma_px = parse_double(key, value);
    else if (key == "keypoint.vel_eps") keypoint_vel_eps = parse_double(key, value);
    else if (key == "keypoint.min_gap") keypoint_min_gap = parse_int(key, value);
    else if (key == "model.patch") model_patch = parse_int(key, value);
    else if (key == "model.layers") model_layers = parse_int(key, value);
    else if (key == "model.embed_dim") model_embed_dim = parse_int(key, value);
    else if (key == "model.heads") model_heads = parse_int(key, value);
    else if (key == "model.hidden_dim") model_hidden_dim = parse_int(key, value);
    else if (key == "model.n_lang_tokens") model_n_lang_tokens = parse_int(key, value);
    else if (key == "model.n_depth_tokens") model_n_depth_tokens = parse_int(key, value);
    else if (key == "model.rot_bins") model_rot_bins = parse_int(key, value);
    else if (key == "opt.lr") opt.lr = parse_double(key, value);
    else if (key == "opt.beta1") opt.beta1 = parse_double(key, value);
    else if (key == "opt.beta2") opt.beta2 = parse_double(key, value);
    else if (key == "opt.eps") opt.eps = parse_double(key, value);
    else if (key == "opt.weight_decay") opt.weight_decay = parse_double(key, value);
    else if (key == "opt.grad_clip") opt.grad_clip = parse_double(key, value);
    else if (key == "train.steps") train_steps = parse_int(key, value);
    else if (key == "train.batch_size") train_batch = parse_int(key, value);
    else if (key == "train.stop_below") train_stop_below = parse_double(key, value);
    else if (key == "train.check_every") train_check_every = parse_int(key, value);
    else if (key == "c2f.zoom_factor") zoom_factor = parse_double(key, value);
    else if (key == "c2f.mode") {
        if (value != "dynamic" && value != "always" && value != "never") {
            throw UsageError("config: c2f.mode must be dynamic, always or never");
        }
        c2f_mode = value;
    } else if (key == "seed") {
        seed = parse_u64(key, value);
    } else {
        throw UsageError("config: unknown key '" + key + "'");
    }
}

Config Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("config: cannot open " + path);
    }
    Config cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config: " + path + ":" + std::to_string(line_no) +
                             ": expected `key = value`");
        }
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void Config::apply_override(const std::string& key_equals_value) {
    const size_t eq = key_equals_value.find('=');
    if (eq == std::string::npos) {
        throw UsageError("config override must look like key=value, got '" + key_equals_value + "'");
    }
    set(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

ModelConfig Config::model_config() const {
    if (model_patch <= 0 || view_resolution % model_patch != 0) {
        throw UsageError("config: view.resolution must be a positive multiple of model.patch");
    }
    ModelConfig cfg;
    cfg.image_size = view_resolution;
    cfg.patch = model_patch;
    const int g = view_resolution / model_patch;
    cfg.n_image_tokens = g * g;
    cfg.n_lang_tokens = model_n_lang_tokens;
    cfg.n_depth_tokens = model_n_depth_tokens;
    cfg.layers = model_layers;
    cfg.embed_dim = model_embed_dim;
    cfg.heads = model_heads;
    cfg.hidden_dim = model_hidden_dim;
    cfg.rot_bins_per_axis = model_rot_bins;
    cfg.validate();
    return cfg;
}

TrainSettings Config::train_settings(const std::string& metrics_csv) const {
    TrainSettings settings;
    settings.steps = train_steps;
    settings.batch_size = train_batch;
    settings.opt = opt;
    settings.seed = seed;
    settings.metrics_csv = metrics_csv;
    settings.stop_when_terms_below = train_stop_below;
    settings.check_every = train_check_every;
    return settings;
}

} // namespace veye
