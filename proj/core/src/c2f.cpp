#include "veye/c2f.hpp"

#include "veye/errors.hpp"
#include "veye/renderer.hpp"

#include <nlohmann/json.hpp>

#include <chrono>

namespace veye {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

nlohmann::json action_to_json(const ActionVector& a) {
    return {{"position", {a.position.x(), a.position.y(), a.position.z()}},
            {"quaternion", {a.rotation.w(), a.rotation.x(), a.rotation.y(), a.rotation.z()}},
            {"gripper_open", a.gripper_open},
            {"collision_allowed", a.collision_allowed}};
}

} // namespace

std::string InferenceTrace::to_json_line() const {
    nlohmann::json j;
    j["coarse_action"] = action_to_json(coarse_action);
    j["refined"] = refined;
    if (fine_action) j["fine_action"] = action_to_json(*fine_action);
    j["coarse_spec"] = nlohmann::json::parse(spec_to_json_text(coarse_spec));
    if (fine_spec) j["fine_spec"] = nlohmann::json::parse(spec_to_json_text(*fine_spec));
    j["coarse_ms"] = coarse_ms;
    j["fine_ms"] = fine_ms;
    j["forward_passes"] = forward_passes;
    j["renders"] = renders;
    return j.dump();
}

template <typename T>
InferenceTrace infer(const PolicyNet<T>& coarse_net, const PolicyNet<T>& fine_net,
                     const PointCloud& cloud, const VirtualCameraSpec& global_spec,
                     const std::string& instruction, double zoom_factor, double workspace_diagonal,
                     RefineMode mode, double heatmap_sigma_px) {
    if (!(zoom_factor > 1.0)) {
        throw UsageError("infer: zoom_factor must be greater than 1");
    }
    const ModelConfig& cfg = coarse_net.config();
    const LanguageEncoding lang = encode_language(instruction, cfg.n_lang_tokens, cfg.embed_dim);

    InferenceTrace trace;
    trace.coarse_spec = global_spec;

    const double t0 = now_ms();
    const VirtualImage global_img = render(cloud, global_spec);
    ++trace.renders;
    const ActionCodec coarse_codec(global_spec, workspace_diagonal, heatmap_sigma_px);
    const PolicyOutputs coarse_out = coarse_net.forward(global_img, coarse_codec.depth_range(), lang);
    ++trace.forward_passes;
    trace.coarse_action = coarse_codec.decode(coarse_out);
    trace.coarse_ms = now_ms() - t0;

    bool want_refine = coarse_codec.decode_refine(coarse_out);
    if (mode == RefineMode::Always) want_refine = true;
    if (mode == RefineMode::Never) want_refine = false;
    trace.refined = want_refine;
    if (!want_refine) {
        return trace;
    }

    const double t1 = now_ms();
    const VirtualCameraSpec zoomed = zoom_spec(global_spec, trace.coarse_action.position, zoom_factor);
    trace.fine_spec = zoomed;
    const VirtualImage fine_img = render(cloud, zoomed);
    ++trace.renders;
    const ActionCodec fine_codec(zoomed, workspace_diagonal, heatmap_sigma_px);
    const PolicyOutputs fine_out = fine_net.forward(fine_img, fine_codec.depth_range(), lang);
    ++trace.forward_passes;
    trace.fine_action = fine_codec.decode(fine_out);
    trace.fine_ms = now_ms() - t1;
    return trace;
}

RefineLabelResult make_refine_labels(std::span<const ActionVector> actions,
                                     const VirtualCameraSpec& coarse_spec, double zoom_factor,
                                     double workspace_diagonal, double heatmap_sigma_px) {
    if (!(zoom_factor > 1.0)) {
        throw UsageError("make_refine_labels: zoom_factor must be greater than 1");
    }
    const ActionCodec coarse_codec(coarse_spec, workspace_diagonal, heatmap_sigma_px);

    RefineLabelResult result;
    result.labels.reserve(actions.size());
    for (const ActionVector& action : actions) {
        try {
            // Quantize through the coarse view, then through the view zoomed
            // on that quantized position.
            const EncodedActionTarget ct = coarse_codec.encode(action, false);
            const ActionVector coarse_q = coarse_codec.decode(one_hot_outputs(ct));

            const VirtualCameraSpec zoomed = zoom_spec(coarse_spec, coarse_q.position, zoom_factor);
            const ActionCodec fine_codec(zoomed, workspace_diagonal, heatmap_sigma_px);
            const EncodedActionTarget ft = fine_codec.encode(action, false);
            const ActionVector fine_q = fine_codec.decode(one_hot_outputs(ft));

            result.labels.push_back(label_refine(coarse_q, fine_q) ? 1 : 0);
        } catch (const EncodeOutOfView&) {
            result.labels.push_back(-1);
            ++result.excluded;
        }
    }
    return result;
}

template InferenceTrace infer<float>(const PolicyNet<float>&, const PolicyNet<float>&,
                                     const PointCloud&, const VirtualCameraSpec&, const std::string&,
                                     double, double, RefineMode, double);
template InferenceTrace infer<double>(const PolicyNet<double>&, const PolicyNet<double>&,
                                      const PointCloud&, const VirtualCameraSpec&, const std::string&,
                                      double, double, RefineMode, double);

} // namespace veye
