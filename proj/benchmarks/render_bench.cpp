#include "veye/renderer.hpp"
#include "veye/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace veye;

PointCloud random_cloud(size_t n) {
    Rng rng(11);
    PointCloud cloud;
    cloud.points.reserve(n);
    cloud.colors.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        cloud.points.emplace_back(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(0.0, 0.4));
        cloud.colors.push_back({static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                                static_cast<std::uint8_t>(rng.uniform_int(0, 255)),
                                static_cast<std::uint8_t>(rng.uniform_int(0, 255))});
    }
    return cloud;
}

VirtualCameraSpec bench_spec(int resolution) {
    VirtualCameraSpec spec;
    spec.elev = 45.0;
    spec.azim = 30.0;
    spec.distance = 1.4;
    spec.look_at = Vec3(0, 0, 0.2);
    spec.half_extent = 0.6;
    spec.resolution = resolution;
    return spec;
}

void BM_RenderMillionPoints(benchmark::State& state) {
    const PointCloud cloud = random_cloud(1'000'000);
    const VirtualCameraSpec spec = bench_spec(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        VirtualImage img = render(cloud, spec);
        benchmark::DoNotOptimize(img.rgb.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(cloud.size()));
}
BENCHMARK(BM_RenderMillionPoints)->Arg(224)->Arg(448)->Unit(benchmark::kMillisecond);

void BM_Backproject(benchmark::State& state) {
    Rng rng(7);
    RgbdFrame frame;
    frame.name = "bench";
    frame.width = frame.height = 128;
    frame.intrinsics = {110.0, 110.0, 64.0, 64.0, 128, 128};
    frame.extrinsics = pose_from_angles(40.0, 120.0, 1.2, Vec3::Zero());
    frame.rgb.assign(128 * 128 * 3, 100);
    frame.depth.resize(128 * 128);
    for (auto& d : frame.depth) d = static_cast<float>(rng.uniform(0.5, 2.0));
    for (auto _ : state) {
        PointCloud cloud = backproject(frame);
        benchmark::DoNotOptimize(cloud.points.data());
    }
}
BENCHMARK(BM_Backproject)->Unit(benchmark::kMicrosecond);

} // namespace
