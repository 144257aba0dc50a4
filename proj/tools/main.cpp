// veye command-line harness: dataset generation, view selection, rendering,
// training, evaluation, gradient checking, plotting.

#include "veye/c2f.hpp"
#include "veye/chat_client.hpp"
#include "veye/config.hpp"
#include "veye/dataset_pipeline.hpp"
#include "veye/errors.hpp"
#include "veye/gradcheck.hpp"
#include "veye/plot.hpp"
#include "veye/rng.hpp"
#include "veye/train.hpp"
#include "veye/viewpoint.hpp"
#include "veye/world.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace {

using namespace veye;

constexpr int kExitUsage = 2;
constexpr int kExitCheckFailed = 3;
constexpr int kExitExternal = 4;

RefineMode mode_from_string(const std::string& mode) {
    if (mode == "dynamic") return RefineMode::Dynamic;
    if (mode == "always") return RefineMode::Always;
    if (mode == "never") return RefineMode::Never;
    throw UsageError("unknown c2f mode '" + mode + "'");
}

VirtualCameraSpec default_view(const Config& cfg, const WorkspaceBounds& workspace) {
    VirtualCameraSpec spec;
    spec.elev = 90.0;
    spec.azim = 0.0;
    spec.look_at = workspace.center();
    spec.distance = cfg.view_distance > 0 ? cfg.view_distance : 1.2 * workspace.diagonal();
    spec.half_extent = cfg.view_half_extent > 0 ? cfg.view_half_extent : 0.5 * workspace.diagonal();
    spec.resolution = cfg.view_resolution;
    return spec;
}

PipelineConfig pipeline_config(const Config& cfg, const VirtualCameraSpec& view,
                               const WorkspaceBounds& workspace) {
    PipelineConfig pc;
    pc.view = view;
    pc.workspace = workspace;
    pc.sigma_px = cfg.codec_sigma_px;
    pc.vel_eps = cfg.keypoint_vel_eps;
    pc.min_gap = cfg.keypoint_min_gap;
    pc.zoom_factor = cfg.zoom_factor;
    return pc;
}

int cmd_make_dataset(const Config& cfg, const std::string& task, int count, const std::string& out) {
    std::vector<Demonstration> demos;
    std::map<size_t, int> histogram;
    CameraRig rig;
    for (int i = 0; i < count; ++i) {
        DemoBuild build = simulate_demo(task, seed_for(cfg.seed, "demo/" + std::to_string(i)));
        if (i == 0) {
            rig = rig_for_scene(build.initial_scene);
        }
        const std::vector<int> keypoints =
            extract_keypoints(build.demo.trajectory, cfg.keypoint_vel_eps, cfg.keypoint_min_gap);
        histogram[keypoints.size()] += 1;
        demos.push_back(std::move(build.demo));
    }
    write_dataset(out, demos);
    save_rig_json(rig, out + ".rig.json");

    std::cout << "wrote " << demos.size() << " '" << task << "' demos to " << out << "\n";
    std::cout << "keypoints per trajectory:\n";
    for (const auto& [k, n] : histogram) {
        std::cout << "  " << k << ": " << std::string(static_cast<size_t>(n), '#') << " (" << n << ")\n";
    }
    return 0;
}

int cmd_select_view(const Config& cfg, const std::string& rig_path, std::string task,
                    const std::string& dataset_path, const std::string& out_spec,
                    const std::string& out_transcript) {
    const CameraRig rig = load_rig_json(rig_path);

    std::vector<RgbdFrame> frames;
    if (!dataset_path.empty()) {
        const std::vector<Demonstration> demos = read_dataset(dataset_path);
        if (demos.empty()) {
            throw UsageError("select-view: dataset is empty");
        }
        frames = demos[0].trajectory.steps.at(0).frames;
        if (task.empty()) task = demos[0].trajectory.instruction;
    } else {
        throw UsageError("select-view: --dataset is required (frames come from its first step)");
    }

    if (cfg.llm_endpoint.empty()) {
        throw UsageError("select-view: llm.endpoint is not configured");
    }
    auto client = make_chat_client(cfg.llm_endpoint, cfg.llm_model, cfg.llm_api_key_env);

    ViewConfig view;
    view.distance = cfg.view_distance;
    view.half_extent = cfg.view_half_extent;
    view.resolution = cfg.view_resolution;
    view.max_retries = cfg.view_max_retries;

    SelectionResult result;
    try {
        result = select_view(*client, task, rig, frames, view);
    } catch (const SelectionFailed& e) {
        nlohmann::json j;
        j["failed"] = true;
        j["error"] = e.what();
        j["transcript"] = e.transcript;
        std::ofstream(out_transcript) << j.dump(2) << "\n";
        throw;
    }

    save_spec_json(result.spec, out_spec);
    nlohmann::json j;
    j["failed"] = false;
    j["client_calls"] = result.client_calls;
    j["transcript"] = result.transcript;
    std::ofstream(out_transcript) << j.dump(2) << "\n";
    std::cout << "selected elev=" << result.spec.elev << " azim=" << result.spec.azim << " after "
              << result.client_calls << " call(s); spec written to " << out_spec << "\n";
    return 0;
}

int cmd_render(const Config& cfg, const std::string& dataset_path, const std::string& rig_path,
               const std::string& spec_path, const std::string& out_dir, int limit) {
    const std::vector<Demonstration> demos = read_dataset(dataset_path);
    const CameraRig rig = load_rig_json(rig_path);
    const VirtualCameraSpec spec = load_spec_json(spec_path);
    const PipelineConfig pc = pipeline_config(cfg, spec, rig.workspace);

    std::filesystem::create_directories(out_dir);
    int written = 0;
    for (const KeyframeSample& ks : keyframe_samples(demos, pc)) {
        if (limit > 0 && written >= limit) break;
        const PointCloud cloud = observation_cloud(ks, rig.workspace);
        const VirtualImage img = render(cloud, spec);
        save_virtual_image(img, out_dir + "/keyframe_" + std::to_string(written));
        ++written;
    }
    std::cout << "rendered " << written << " keyframe view(s) into " << out_dir << "\n";
    return 0;
}

int cmd_train(const Config& cfg, const std::string& dataset_path, const std::string& rig_path,
              const std::string& spec_path, const std::string& out_dir, const std::string& stage) {
    const std::vector<Demonstration> demos = read_dataset(dataset_path);
    const CameraRig rig = load_rig_json(rig_path);
    const VirtualCameraSpec spec = load_spec_json(spec_path);
    const PipelineConfig pc = pipeline_config(cfg, spec, rig.workspace);
    const ModelConfig model_cfg = cfg.model_config();

    std::filesystem::create_directories(out_dir);
    const SampleSet samples = build_training_samples(demos, pc);
    if (samples.skipped_out_of_view > 0) {
        std::cerr << "warning: " << samples.skipped_out_of_view
                  << " keyframe(s) projected outside the selected view and were excluded\n";
    }
    const DepthRange range = depth_range_for(spec, rig.workspace.diagonal());

    if (stage == "coarse" || stage == "both") {
        PolicyNetF net(model_cfg, seed_for(cfg.seed, "model/coarse"));
        const TrainResult r =
            train(net, samples.coarse, range, cfg.train_settings(out_dir + "/coarse_metrics.csv"));
        net.save_checkpoint(out_dir + "/coarse.ckpt");
        std::cout << "coarse: " << r.steps_run << " step(s), final loss " << r.final_loss.total()
                  << "\n";
    }
    if (stage == "fine" || stage == "both") {
        PolicyNetF net(model_cfg, seed_for(cfg.seed, "model/fine"));
        // The fine stage sees zoomed views; its depth window tracks the zoomed
        // specs, which share distance with the global view.
        const TrainResult r =
            train(net, samples.fine, range, cfg.train_settings(out_dir + "/fine_metrics.csv"));
        net.save_checkpoint(out_dir + "/fine.ckpt");
        std::cout << "fine: " << r.steps_run << " step(s), final loss " << r.final_loss.total() << "\n";
    }
    return 0;
}

int cmd_eval(const Config& cfg, const std::string& dataset_path, const std::string& rig_path,
             const std::string& spec_path, const std::string& coarse_ckpt,
             const std::string& fine_ckpt, const std::string& out_report,
             const std::string& out_traces) {
    const std::vector<Demonstration> demos = read_dataset(dataset_path);
    const CameraRig rig = load_rig_json(rig_path);
    const VirtualCameraSpec spec = load_spec_json(spec_path);
    const PipelineConfig pc = pipeline_config(cfg, spec, rig.workspace);

    const PolicyNetF coarse = PolicyNetF::load_checkpoint(coarse_ckpt);
    PolicyNetF fine;
    RefineMode mode = mode_from_string(cfg.c2f_mode);
    if (!fine_ckpt.empty()) {
        fine = PolicyNetF::load_checkpoint(fine_ckpt);
    } else {
        if (mode != RefineMode::Never) {
            std::cerr << "warning: no fine checkpoint given; forcing c2f.mode=never\n";
        }
        fine = coarse;
        mode = RefineMode::Never;
    }

    const EvalReport report = evaluate(coarse, fine, demos, pc, mode);
    std::ofstream(out_report) << report.to_json() << "\n";

    if (!out_traces.empty()) {
        std::ofstream traces(out_traces);
        const double diagonal = rig.workspace.diagonal();
        for (const KeyframeSample& ks : keyframe_samples(demos, pc)) {
            const PointCloud cloud = observation_cloud(ks, rig.workspace);
            const InferenceTrace trace = infer(coarse, fine, cloud, spec,
                                               ks.demo->trajectory.instruction, pc.zoom_factor,
                                               diagonal, mode, pc.sigma_px);
            traces << trace.to_json_line() << "\n";
        }
    }

    std::cout << "eval: " << report.samples << " keyframes, mean position error "
              << report.mean_position_error << " m, mean rotation error "
              << report.mean_rotation_error_deg << " deg, success rate " << report.success_rate
              << ", refined " << report.refined_count << "\n";
    std::cout << "report written to " << out_report << "\n";
    return 0;
}

int cmd_gradcheck(const Config& cfg) {
    const std::vector<ModelConfig> configs = gradcheck_toy_configs();
    bool all_passed = true;
    for (size_t i = 0; i < configs.size(); ++i) {
        const GradCheckResult r =
            run_gradcheck(configs[i], seed_for(cfg.seed, "gradcheck/" + std::to_string(i)));
        std::cout << "config " << (i + 1) << ": " << (r.passed ? "PASS" : "FAIL")
                  << " max relative error " << r.max_rel_error << " over " << r.probes
                  << " probes (worst tensor: " << r.worst_tensor << ")\n";
        all_passed = all_passed && r.passed;
    }
    return all_passed ? 0 : kExitCheckFailed;
}

int run(int argc, char** argv) {
    CLI::App app{"virtual-eye manipulation pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--set", overrides, "override a config key (key=value), repeatable");

    auto* make = app.add_subcommand("make-dataset", "generate scripted demonstrations");
    std::string task = "reach";
    int count = 8;
    std::string out = "dataset.veds";
    make->add_option("--task", task, "reach, stack or place_in_bowl");
    make->add_option("--count", count, "number of demonstrations");
    make->add_option("--out", out, "output dataset path");

    auto* select = app.add_subcommand("select-view", "query the configured model for a camera pose");
    std::string rig_path;
    std::string dataset_path;
    std::string select_task;
    std::string out_spec = "view.json";
    std::string out_transcript = "transcript.json";
    select->add_option("--rig", rig_path, "camera rig JSON")->required();
    select->add_option("--dataset", dataset_path, "dataset supplying the camera frames")->required();
    select->add_option("--task", select_task, "task text (default: dataset instruction)");
    select->add_option("--out-spec", out_spec, "output camera spec JSON");
    select->add_option("--out-transcript", out_transcript, "output conversation JSON");

    auto* rend = app.add_subcommand("render", "re-render keyframe observations through a view");
    std::string r_dataset, r_rig, r_spec, r_out = "renders";
    int r_limit = 0;
    rend->add_option("--dataset", r_dataset)->required();
    rend->add_option("--rig", r_rig)->required();
    rend->add_option("--spec", r_spec)->required();
    rend->add_option("--out-dir", r_out);
    rend->add_option("--limit", r_limit, "stop after this many keyframes (0 = all)");

    auto* tr = app.add_subcommand("train", "train the coarse (and fine) policy");
    std::string t_dataset, t_rig, t_spec, t_out = "run";
    std::string t_stage = "both";
    tr->add_option("--dataset", t_dataset)->required();
    tr->add_option("--rig", t_rig)->required();
    tr->add_option("--spec", t_spec)->required();
    tr->add_option("--out-dir", t_out);
    tr->add_option("--stage", t_stage, "coarse, fine or both");

    auto* ev = app.add_subcommand("eval", "score checkpoints on a dataset");
    std::string e_dataset, e_rig, e_spec, e_coarse, e_fine, e_report = "report.json", e_traces;
    ev->add_option("--dataset", e_dataset)->required();
    ev->add_option("--rig", e_rig)->required();
    ev->add_option("--spec", e_spec)->required();
    ev->add_option("--coarse", e_coarse, "coarse checkpoint")->required();
    ev->add_option("--fine", e_fine, "fine checkpoint (optional)");
    ev->add_option("--out", e_report, "report JSON path");
    ev->add_option("--traces", e_traces, "also write JSON-lines inference traces");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the policy gradients");

    auto* pl = app.add_subcommand("plot", "render loss curves or error histograms to PNG");
    std::string p_metrics, p_report, p_out = "plot.png";
    pl->add_option("--metrics", p_metrics, "training metrics CSV");
    pl->add_option("--report", p_report, "eval report JSON");
    pl->add_option("--out", p_out, "output PNG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    Config cfg;
    if (!config_path.empty()) {
        cfg = Config::load_file(config_path);
    }
    for (const std::string& kv : overrides) {
        cfg.apply_override(kv);
    }

    if (make->parsed()) return cmd_make_dataset(cfg, task, count, out);
    if (select->parsed())
        return cmd_select_view(cfg, rig_path, select_task, dataset_path, out_spec, out_transcript);
    if (rend->parsed()) return cmd_render(cfg, r_dataset, r_rig, r_spec, r_out, r_limit);
    if (tr->parsed()) {
        if (t_stage != "coarse" && t_stage != "fine" && t_stage != "both") {
            throw UsageError("train: --stage must be coarse, fine or both");
        }
        return cmd_train(cfg, t_dataset, t_rig, t_spec, t_out, t_stage);
    }
    if (ev->parsed())
        return cmd_eval(cfg, e_dataset, e_rig, e_spec, e_coarse, e_fine, e_report, e_traces);
    if (gc->parsed()) return cmd_gradcheck(cfg);
    if (pl->parsed()) {
        if (!p_metrics.empty()) {
            plot_metrics_csv(p_metrics, p_out);
        } else if (!p_report.empty()) {
            plot_report_histogram(p_report, p_out);
        } else {
            throw UsageError("plot: give --metrics or --report");
        }
        std::cout << "wrote " << p_out << "\n";
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const veye::ExternalServiceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitExternal;
    } catch (const veye::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
