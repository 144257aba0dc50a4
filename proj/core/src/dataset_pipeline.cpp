#include "veye/dataset_pipeline.hpp"

#include "veye/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace veye {

std::vector<KeyframeSample> keyframe_samples(std::span<const Demonstration> demos,
                                             const PipelineConfig& cfg) {
    std::vector<KeyframeSample> samples;
    for (const Demonstration& demo : demos) {
        const std::vector<int> keypoints = extract_keypoints(demo.trajectory, cfg.vel_eps, cfg.min_gap);
        int prev = 0;
        for (int k : keypoints) {
            samples.push_back({&demo, prev, k});
            prev = k;
        }
    }
    return samples;
}

PointCloud observation_cloud(const KeyframeSample& sample, const WorkspaceBounds& workspace) {
    const TrajectoryStep& step = sample.demo->trajectory.steps[sample.observation_step];
    return fuse(std::span<const RgbdFrame>(step.frames.data(), step.frames.size()), workspace);
}

SampleSet build_training_samples(std::span<const Demonstration> demos, const PipelineConfig& cfg) {
    const double diagonal = cfg.workspace.diagonal();
    const ActionCodec coarse_codec(cfg.view, diagonal, cfg.sigma_px);

    SampleSet set;
    for (const KeyframeSample& ks : keyframe_samples(demos, cfg)) {
        const ActionVector& action = ks.demo->trajectory.steps[ks.keyframe_step].action;

        const RefineLabelResult label = make_refine_labels(std::span<const ActionVector>(&action, 1),
                                                           cfg.view, cfg.zoom_factor, diagonal,
                                                           cfg.sigma_px);
        if (label.labels[0] < 0) {
            ++set.skipped_out_of_view;
            continue;
        }
        const bool refine = label.labels[0] == 1;

        const PointCloud cloud = observation_cloud(ks, cfg.workspace);

        TrainSample coarse;
        coarse.image = render(cloud, cfg.view);
        coarse.instruction = ks.demo->trajectory.instruction;
        coarse.target = coarse_codec.encode(action, refine);
        coarse.expert_action = action;
        set.coarse.push_back(std::move(coarse));

        // Fine stage: zoom on the quantized expert position, mirroring the
        // inference-time zoom on the coarse prediction.
        const ActionVector coarse_q =
            coarse_codec.decode(one_hot_outputs(coarse_codec.encode(action, refine)));
        const VirtualCameraSpec zoomed = zoom_spec(cfg.view, coarse_q.position, cfg.zoom_factor);
        const ActionCodec fine_codec(zoomed, diagonal, cfg.sigma_px);
        TrainSample fine;
        fine.image = render(cloud, zoomed);
        fine.instruction = ks.demo->trajectory.instruction;
        fine.target = fine_codec.encode(action, refine);
        fine.expert_action = action;
        set.fine.push_back(std::move(fine));
    }
    return set;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["samples"] = samples;
    j["mean_position_error"] = mean_position_error;
    j["mean_rotation_error_deg"] = mean_rotation_error_deg;
    j["success_rate"] = success_rate;
    j["refined_count"] = refined_count;
    j["position_quantization_bound"] = position_quantization_bound;
    j["per_sample"] = nlohmann::json::array();
    for (const EvalEntry& e : entries) {
        j["per_sample"].push_back({{"task", e.task},
                                   {"position_error", e.position_error},
                                   {"rotation_error_deg", e.rotation_error_deg},
                                   {"refined", e.refined},
                                   {"success", e.success}});
    }
    return j.dump(2);
}

template <typename T>
EvalReport evaluate(const PolicyNet<T>& coarse_net, const PolicyNet<T>& fine_net,
                    std::span<const Demonstration> demos, const PipelineConfig& cfg,
                    RefineMode mode) {
    const double diagonal = cfg.workspace.diagonal();
    const ActionCodec coarse_codec(cfg.view, diagonal, cfg.sigma_px);

    EvalReport report;
    report.position_quantization_bound = coarse_codec.position_quantization_bound();
    // Worst-case geodesic error when every axis is off by half a bin.
    const double rot_bound_deg = 3.0 * kRotBinDegrees / 2.0;

    double pos_sum = 0.0;
    double rot_sum = 0.0;
    int successes = 0;
    for (const KeyframeSample& ks : keyframe_samples(demos, cfg)) {
        const ActionVector& expert = ks.demo->trajectory.steps[ks.keyframe_step].action;
        const PointCloud cloud = observation_cloud(ks, cfg.workspace);
        const InferenceTrace trace = infer(coarse_net, fine_net, cloud, cfg.view,
                                           ks.demo->trajectory.instruction, cfg.zoom_factor, diagonal,
                                           mode, cfg.sigma_px);
        const ActionVector& predicted = trace.final_action();

        EvalEntry entry;
        entry.task = ks.demo->task_name;
        entry.position_error = (predicted.position - expert.position).norm();
        entry.rotation_error_deg = rotation_angle_deg(predicted.rotation, expert.rotation);
        entry.refined = trace.refined;
        entry.success = entry.position_error <= report.position_quantization_bound &&
                        entry.rotation_error_deg <= rot_bound_deg;
        pos_sum += entry.position_error;
        rot_sum += entry.rotation_error_deg;
        successes += entry.success ? 1 : 0;
        report.refined_count += trace.refined ? 1 : 0;
        report.entries.push_back(std::move(entry));
    }
    report.samples = static_cast<int>(report.entries.size());
    if (report.samples > 0) {
        report.mean_position_error = pos_sum / report.samples;
        report.mean_rotation_error_deg = rot_sum / report.samples;
        report.success_rate = static_cast<double>(successes) / report.samples;
    }
    return report;
}

template EvalReport evaluate<float>(const PolicyNet<float>&, const PolicyNet<float>&,
                                    std::span<const Demonstration>, const PipelineConfig&, RefineMode);
template EvalReport evaluate<double>(const PolicyNet<double>&, const PolicyNet<double>&,
                                     std::span<const Demonstration>, const PipelineConfig&, RefineMode);

} // namespace veye
