#pragma once

#include "veye/c2f.hpp"
#include "veye/train.hpp"
#include "veye/world.hpp"

#include <span>
#include <string>
#include <vector>

namespace veye {

// Shared wiring between demonstrations and the policy: keyframing, fusion,
// rendering, encoding.
struct PipelineConfig {
    VirtualCameraSpec view;     // the global/coarse view
    WorkspaceBounds workspace;  // crop bounds; diagonal drives the depth window
    double sigma_px = 1.5;
    double vel_eps = kDefaultVelEps;
    int min_gap = kDefaultMinGap;
    double zoom_factor = 4.0;
};

// For each keyframe: observation = frames at the previous keyframe (step 0 for
// the first), target = the keyframe's action.
struct KeyframeSample {
    const Demonstration* demo = nullptr;
    int observation_step = 0;
    int keyframe_step = 0;
};

std::vector<KeyframeSample> keyframe_samples(std::span<const Demonstration> demos,
                                             const PipelineConfig& cfg);

PointCloud observation_cloud(const KeyframeSample& sample, const WorkspaceBounds& workspace);

struct SampleSet {
    std::vector<TrainSample> coarse;
    std::vector<TrainSample> fine;  // zoomed around the quantized expert position
    int skipped_out_of_view = 0;
};

// Renders and encodes every keyframe sample; refine labels come from
// make_refine_labels (codec quantization bootstrap).
SampleSet build_training_samples(std::span<const Demonstration> demos, const PipelineConfig& cfg);

struct EvalEntry {
    std::string task;
    double position_error = 0.0;
    double rotation_error_deg = 0.0;
    bool refined = false;
    bool success = false;
};

struct EvalReport {
    int samples = 0;
    double mean_position_error = 0.0;
    double mean_rotation_error_deg = 0.0;
    double success_rate = 0.0;
    int refined_count = 0;
    double position_quantization_bound = 0.0;
    std::vector<EvalEntry> entries;

    std::string to_json() const;
};

// Runs infer() on every keyframe sample and scores the final action against
// the expert. Success = position error within the codec quantization bound and
// rotation error within the codec's worst-case rotation quantization.
template <typename T>
EvalReport evaluate(const PolicyNet<T>& coarse_net, const PolicyNet<T>& fine_net,
                    std::span<const Demonstration> demos, const PipelineConfig& cfg,
                    RefineMode mode);

} // namespace veye
