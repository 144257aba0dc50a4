#include "veye/gradcheck.hpp"

#include "veye/rng.hpp"

#include <algorithm>
#include <cmath>

namespace veye {

namespace {

// Random but well-formed inputs: image, instruction, and a hand-built target
// with a smooth heatmap distribution. No codec involved.
struct Probe {
    MatrixX<double> patches;
    MatrixX<double> lang;
    EncodedActionTarget target;
};

Probe make_probe(const ModelConfig& cfg, Rng& rng) {
    Probe probe;

    VirtualImage img;
    img.resolution = cfg.image_size;
    img.rgb.resize(static_cast<size_t>(cfg.image_size) * cfg.image_size * 3);
    img.depth.resize(static_cast<size_t>(cfg.image_size) * cfg.image_size);
    for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    for (auto& d : img.depth) {
        d = rng.uniform() < 0.2 ? kDepthBackground : static_cast<float>(rng.uniform(0.4, 1.6));
    }
    const DepthRange range{0.4, 1.6};
    probe.patches = PolicyNet<double>::extract_patches(img, range, cfg);

    probe.lang = encode_language("probe the gradient of every head", cfg.n_lang_tokens,
                                 cfg.embed_dim)
                     .tokens;

    EncodedActionTarget& target = probe.target;
    target.resolution = cfg.image_size;
    target.heatmap.resize(static_cast<size_t>(cfg.image_size) * cfg.image_size);
    double sum = 0.0;
    for (double& wgt : target.heatmap) {
        wgt = std::exp(rng.normal(0.0, 1.0));
        sum += wgt;
    }
    for (double& wgt : target.heatmap) wgt /= sum;
    target.depth_bin = rng.uniform_int(0, cfg.n_depth_tokens - 1);
    for (int axis = 0; axis < 3; ++axis) {
        target.rot_bins[axis] = rng.uniform_int(0, cfg.rot_bins_per_axis - 1);
    }
    target.open_bit = rng.uniform() < 0.5;
    target.collision_bit = rng.uniform() < 0.5;
    target.refine_label = rng.uniform() < 0.5;
    return probe;
}

} // namespace

GradCheckResult run_gradcheck(const ModelConfig& cfg, std::uint64_t seed, int probes_per_tensor,
                              double h, double tolerance) {
    cfg.validate();
    PolicyNet<double> net(cfg, seed_for(seed, "gradcheck/params"));
    Rng rng(seed_for(seed, "gradcheck/probe"));
    const Probe probe = make_probe(cfg, rng);

    ParamSet<double> grads = net.params().zeros_like();
    net.loss_and_grad(probe.patches, probe.lang, probe.target, grads);

    auto loss_total = [&]() {
        const PolicyOutputs out = net.forward_tokens(probe.patches, probe.lang, nullptr);
        return loss(out, probe.target).total();
    };

    GradCheckResult result;
    result.tolerance = tolerance;
    for (size_t t = 0; t < grads.entries().size(); ++t) {
        auto& theta = net.params().entries()[t].value;
        const auto& g = grads.entries()[t].value;
        const int n = static_cast<int>(theta.size());
        const int probes = std::min(probes_per_tensor, n);
        for (int k = 0; k < probes; ++k) {
            const int idx = rng.uniform_int(0, n - 1);
            double* slot = theta.data() + idx;
            const double saved = *slot;
            *slot = saved + h;
            const double plus = loss_total();
            *slot = saved - h;
            const double minus = loss_total();
            *slot = saved;

            const double fd = (plus - minus) / (2.0 * h);
            const double analytic = *(g.data() + idx);
            // Central differences carry ~|L|*eps/h of roundoff (~1e-9 here),
            // so elements below 1e-4 are compared absolutely: the tolerance
            // then demands |analytic - fd| <= 1e-8, far above the noise but
            // far below any real backward-pass defect.
            const double rel = std::abs(analytic - fd) /
                               std::max({std::abs(analytic), std::abs(fd), 1e-4});
            ++result.probes;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = grads.entries()[t].name;
            }
        }
    }
    result.passed = result.max_rel_error <= tolerance;
    return result;
}

std::vector<ModelConfig> gradcheck_toy_configs() {
    std::vector<ModelConfig> configs(3);

    configs[0].image_size = 28;
    configs[0].patch = 14;
    configs[0].n_image_tokens = 4;
    configs[0].n_lang_tokens = 7;
    configs[0].n_depth_tokens = 6;
    configs[0].layers = 2;
    configs[0].embed_dim = 16;
    configs[0].heads = 2;
    configs[0].hidden_dim = 24;

    configs[1].image_size = 42;
    configs[1].patch = 14;
    configs[1].n_image_tokens = 9;
    configs[1].n_lang_tokens = 5;
    configs[1].n_depth_tokens = 4;
    configs[1].layers = 2;
    configs[1].embed_dim = 16;
    configs[1].heads = 4;
    configs[1].hidden_dim = 32;

    configs[2].image_size = 28;
    configs[2].patch = 7;
    configs[2].n_image_tokens = 16;
    configs[2].n_lang_tokens = 3;
    configs[2].n_depth_tokens = 5;
    configs[2].layers = 2;
    configs[2].embed_dim = 16;
    configs[2].heads = 2;
    configs[2].hidden_dim = 16;

    return configs;
}

} // namespace veye
