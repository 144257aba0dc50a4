#include "veye/policy.hpp"
#include "veye/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace veye;

VirtualImage random_image(int resolution) {
    Rng rng(3);
    VirtualImage img;
    img.resolution = resolution;
    img.rgb.resize(static_cast<size_t>(resolution) * resolution * 3);
    img.depth.resize(static_cast<size_t>(resolution) * resolution);
    for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    for (auto& d : img.depth) d = static_cast<float>(rng.uniform(0.8, 2.0));
    return img;
}

void BM_PolicyForward(benchmark::State& state) {
    ModelConfig cfg;
    PolicyNetF net(cfg, 5);
    const VirtualImage img = random_image(cfg.image_size);
    const DepthRange range{0.8, 2.0};
    const LanguageEncoding lang = encode_language("stack the red block", cfg.n_lang_tokens, cfg.embed_dim);
    const MatrixX<float> patches = PolicyNetF::extract_patches(img, range, cfg);
    const MatrixX<float> lang_f = lang.tokens.cast<float>();
    for (auto _ : state) {
        PolicyOutputs out = net.forward_tokens(patches, lang_f, nullptr);
        benchmark::DoNotOptimize(out.heatmap_logits.data());
    }
}
BENCHMARK(BM_PolicyForward)->Unit(benchmark::kMillisecond);

void BM_PolicyLossAndGrad(benchmark::State& state) {
    ModelConfig cfg;
    PolicyNetF net(cfg, 5);
    const VirtualImage img = random_image(cfg.image_size);
    const DepthRange range{0.8, 2.0};
    const LanguageEncoding lang = encode_language("stack the red block", cfg.n_lang_tokens, cfg.embed_dim);
    const MatrixX<float> patches = PolicyNetF::extract_patches(img, range, cfg);
    const MatrixX<float> lang_f = lang.tokens.cast<float>();

    EncodedActionTarget target;
    target.resolution = cfg.image_size;
    target.heatmap.assign(static_cast<size_t>(cfg.image_size) * cfg.image_size, 0.0);
    target.heatmap[5000] = 1.0;
    target.depth_bin = 7;
    target.rot_bins = {0, 1, 2};

    ParamSet<float> grads = net.params().zeros_like();
    for (auto _ : state) {
        grads.set_zero();
        LossBreakdown b = net.loss_and_grad(patches, lang_f, target, grads);
        benchmark::DoNotOptimize(b.trans);
    }
}
BENCHMARK(BM_PolicyLossAndGrad)->Unit(benchmark::kMillisecond);

} // namespace
