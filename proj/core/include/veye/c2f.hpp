#pragma once

#include "veye/action_codec.hpp"
#include "veye/policy.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace veye {

// One two-stage inference, with enough bookkeeping to assert the efficiency
// contract (pass/render counts) and to serialize for the eval harness.
struct InferenceTrace {
    ActionVector coarse_action;
    bool refined = false;
    std::optional<ActionVector> fine_action;
    VirtualCameraSpec coarse_spec;
    std::optional<VirtualCameraSpec> fine_spec;
    double coarse_ms = 0.0;
    double fine_ms = 0.0;
    int forward_passes = 0;
    int renders = 0;

    const ActionVector& final_action() const { return refined ? *fine_action : coarse_action; }
    std::string to_json_line() const;
};

enum class RefineMode {
    Dynamic,  // follow the coarse net's refine head
    Always,   // static two-stage baseline
    Never,    // coarse only
};

// Coarse pass on the global view; when the refine indicator fires, re-render
// zoomed around the coarse position and run the fine pass. Decoded actions are
// inherently inside the active frustum, so the fine action stays within the
// zoom window by construction.
template <typename T>
InferenceTrace infer(const PolicyNet<T>& coarse_net, const PolicyNet<T>& fine_net,
                     const PointCloud& cloud, const VirtualCameraSpec& global_spec,
                     const std::string& instruction, double zoom_factor, double workspace_diagonal,
                     RefineMode mode = RefineMode::Dynamic, double heatmap_sigma_px = 1.5);

struct RefineLabelResult {
    std::vector<int> labels;  // 0/1 per action; -1 where excluded (out of view)
    int excluded = 0;
};

// Bootstrap labels from codec quantization discrepancy: encode+decode each
// action through the global view and through the view zoomed on the quantized
// coarse position, then compare with the 0.01 m / 5 degree thresholds.
RefineLabelResult make_refine_labels(std::span<const ActionVector> actions,
                                     const VirtualCameraSpec& coarse_spec, double zoom_factor,
                                     double workspace_diagonal, double heatmap_sigma_px = 1.5);

} // namespace veye
