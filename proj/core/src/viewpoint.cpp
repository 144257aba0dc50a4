#include "veye/viewpoint.hpp"

#include "veye/draw.hpp"
#include "veye/errors.hpp"
#include "veye/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

namespace veye {

namespace {

const char* kRuleTexts[4] = {
    "Prefer azimuths aligned with the workspace axes (multiples of 90 degrees); rotate away only "
    "as far as needed to avoid occlusion.",
    "Choose by analyzing visual information in the images; never answer with or rely on camera "
    "names or labels.",
    "The camera must look downwards from above the table: ELEV must be greater than 0.",
    "Answer with exactly one line of the form ELEV=<number>; AZIM=<number>. A short rationale may "
    "follow on the next line.",
};

double wrap_azim(double deg) {
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    return w - 180.0;
}

// Fixed three-quarter view used only for the annotated overview image.
struct SomView {
    CameraAxes axes;
    Vec3 center;
    double scale;  // pixels per meter
    int size;

    std::pair<int, int> project(const Vec3& p) const {
        const Vec3 q = p - center;
        const double u = q.dot(axes.right) * scale + size / 2.0;
        const double v = q.dot(axes.down) * scale + size / 2.0;
        return {static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))};
    }
};

void draw_arrow(Canvas& canvas, const SomView& view, const Vec3& from, const Vec3& to, Color color,
                const std::string& label) {
    const auto [x0, y0] = view.project(from);
    const auto [x1, y1] = view.project(to);
    draw_line(canvas, x0, y0, x1, y1, color);
    // Arrowhead: two short barbs.
    const double dx = x1 - x0;
    const double dy = y1 - y0;
    const double len = std::hypot(dx, dy);
    if (len > 1e-6) {
        const double ux = dx / len;
        const double uy = dy / len;
        const double barb = 8.0;
        for (double side : {0.5, -0.5}) {
            const int bx = static_cast<int>(std::lround(x1 - barb * (ux + side * uy)));
            const int by = static_cast<int>(std::lround(y1 - barb * (uy - side * ux)));
            draw_line(canvas, x1, y1, bx, by, color);
        }
        const int lx = static_cast<int>(std::lround(x1 + 10.0 * ux)) - 3;
        const int ly = static_cast<int>(std::lround(y1 + 10.0 * uy)) - 4;
        draw_text(canvas, lx, ly, label, color);
    }
}

} // namespace

std::string PromptBundle::combined_text() const {
    std::ostringstream out;
    for (const auto& [title, text] : sections) {
        out << "## " << title << "\n" << text << "\n\n";
    }
    return out.str();
}

std::string to_string(RuleViolation v) {
    switch (v) {
        case RuleViolation::NotAboveTable: return "NOT_ABOVE_TABLE";
        case RuleViolation::NotAxisPreferred: return "NOT_AXIS_PREFERRED";
        case RuleViolation::BadFormat: return "BAD_FORMAT";
        case RuleViolation::LabelShortcut: return "LABEL_SHORTCUT";
    }
    return "UNKNOWN";
}

bool ValidationReport::has(RuleViolation v) const {
    return std::find(violations.begin(), violations.end(), v) != violations.end();
}

std::vector<std::uint8_t> build_som_image(const CameraRig& rig, int image_size) {
    Canvas canvas(image_size, image_size, {250, 250, 250});

    SomView view;
    view.axes = axes_for_forward(-direction_from_angles(32.0, 135.0));
    view.center = rig.workspace.center();
    view.size = image_size;

    // Frame everything: workspace corners, camera centers, axis tips.
    const Vec3& lo = rig.workspace.min;
    const Vec3& hi = rig.workspace.max;
    std::vector<Vec3> anchors;
    for (int i = 0; i < 8; ++i) {
        anchors.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    }
    const double axis_len = 0.6 * (hi - lo).maxCoeff();
    anchors.emplace_back(axis_len, 0, 0);
    anchors.emplace_back(0, axis_len, 0);
    anchors.emplace_back(0, 0, axis_len);
    for (const RigCamera& cam : rig.cameras) {
        anchors.push_back(cam.extrinsics.translation);
    }
    double max_r = 1e-6;
    for (const Vec3& p : anchors) {
        const Vec3 q = p - view.center;
        max_r = std::max({max_r, std::abs(q.dot(view.axes.right)), std::abs(q.dot(view.axes.down))});
    }
    view.scale = (image_size / 2.0 - 24.0) / max_r;

    // Workspace wireframe.
    const Color box_color = {140, 140, 140};
    auto corner = [&](int i) {
        return Vec3(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
    };
    for (int i = 0; i < 8; ++i) {
        for (int bit : {1, 2, 4}) {
            if (!(i & bit)) {
                const auto [x0, y0] = view.project(corner(i));
                const auto [x1, y1] = view.project(corner(i | bit));
                draw_line(canvas, x0, y0, x1, y1, box_color);
            }
        }
    }

    // World axes with arrowheads, meeting at the origin.
    draw_arrow(canvas, view, Vec3::Zero(), Vec3(axis_len, 0, 0), {200, 40, 40}, "x");
    draw_arrow(canvas, view, Vec3::Zero(), Vec3(0, axis_len, 0), {40, 160, 40}, "y");
    draw_arrow(canvas, view, Vec3::Zero(), Vec3(0, 0, axis_len), {40, 70, 210}, "z");

    // Numbered marks at the fixed camera positions.
    for (size_t i = 0; i < rig.cameras.size(); ++i) {
        const auto [x, y] = view.project(rig.cameras[i].extrinsics.translation);
        draw_disc(canvas, x, y, 9, {235, 140, 30});
        const std::string digits = std::to_string(i + 1);
        draw_text(canvas, x - text_width(digits) / 2 + 1, y - 3, digits, {255, 255, 255});
    }

    return encode_png_rgb(canvas.rgb.data(), canvas.width, canvas.height);
}

PromptBundle build_prompt(const std::string& task, const CameraRig& rig, std::span<const RgbdFrame> frames) {
    if (task.empty()) {
        throw UsageError("build_prompt: task instruction must not be empty");
    }
    if (frames.size() != 4) {
        throw UsageError("build_prompt: exactly 4 camera frames required, got " +
                         std::to_string(frames.size()));
    }

    PromptBundle bundle;

    std::ostringstream env;
    env << "The workspace is a tabletop volume observed by " << rig.cameras.size()
        << " fixed cameras. The first image is an annotated overview: the gray box outlines the "
           "workspace, the colored arrows are the world axes meeting at the origin (x red, y green, "
           "z blue, z pointing up), and each orange mark is a fixed camera position:";
    for (size_t i = 0; i < rig.cameras.size(); ++i) {
        env << (i ? "," : "") << " mark " << (i + 1) << " = camera " << (i + 1);
    }
    env << ". The remaining images are the raw color views from those cameras, in the same order. "
           "Units are meters; the table top lies near z = 0.";
    bundle.sections.emplace_back("environment description", env.str());

    std::ostringstream taskd;
    taskd << "Select a virtual camera pose for this manipulation task: \"" << task
          << "\". The pose is two numbers. ELEV is the angle in degrees between the horizontal "
             "plane and the line from the workspace center to the camera; 90 means directly "
             "overhead. AZIM is the angle in degrees of that line's horizontal projection, "
             "measured counterclockwise from the +x axis. The camera looks at the workspace "
             "center from a fixed distance. Choose the pose that shows the task-relevant objects "
             "most clearly and avoids occlusion.";
    bundle.sections.emplace_back("task description", taskd.str());

    bundle.sections.emplace_back(
        "in-context examples",
        "Worked examples for this kind of rig:\n"
        "- a camera at the front edge looking across the table: ELEV=15; AZIM=180\n"
        "- a camera overhead looking straight down: ELEV=90; AZIM=0\n"
        "- a camera at the right edge looking across the table: ELEV=15; AZIM=-90");

    std::ostringstream rules;
    rules << "Rules:";
    for (int i = 0; i < 4; ++i) {
        rules << "\n" << (i + 1) << ". " << kRuleTexts[i];
    }
    bundle.sections.emplace_back("rules", rules.str());

    bundle.images.push_back({"environment", build_som_image(rig)});
    for (const RgbdFrame& frame : frames) {
        bundle.images.push_back({frame.name, encode_png_rgb(frame.rgb.data(), frame.width, frame.height)});
    }
    return bundle;
}

ViewpointResponse parse_response(const std::string& text) {
    static const std::regex pattern(
        R"(ELEV\s*=\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*;\s*AZIM\s*=\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))",
        std::regex::icase);
    std::smatch match;
    if (!std::regex_search(text, match, pattern)) {
        throw ResponseParseError(text);
    }
    ViewpointResponse resp;
    resp.elev = std::stod(match[1].str());
    resp.azim = wrap_azim(std::stod(match[2].str()));
    if (resp.elev < -90.0 || resp.elev > 90.0) {
        throw ResponseParseError(text);
    }
    resp.rationale = match.suffix().str();
    const size_t start = resp.rationale.find_first_not_of(" \t\r\n.;");
    resp.rationale = start == std::string::npos ? "" : resp.rationale.substr(start);
    return resp;
}

ValidationReport validate(const ViewpointResponse& resp) {
    ValidationReport report;
    if (resp.elev <= 0.0) {
        report.violations.push_back(RuleViolation::NotAboveTable);
        report.passed = false;
    }
    const double mod = std::abs(std::remainder(resp.azim, 90.0));
    if (mod > kAxisPreferenceBandDeg) {
        report.violations.push_back(RuleViolation::NotAxisPreferred);  // warning, never fails alone
    }
    return report;
}

namespace {

const char* rule_for(RuleViolation v) {
    switch (v) {
        case RuleViolation::NotAxisPreferred: return kRuleTexts[0];
        case RuleViolation::LabelShortcut: return kRuleTexts[1];
        case RuleViolation::NotAboveTable: return kRuleTexts[2];
        case RuleViolation::BadFormat: return kRuleTexts[3];
    }
    return "";
}

std::string feedback_for(const std::vector<RuleViolation>& violations) {
    std::ostringstream out;
    out << "The previous answer was rejected (";
    for (size_t i = 0; i < violations.size(); ++i) {
        out << (i ? ", " : "") << to_string(violations[i]);
    }
    out << "). Violated rule";
    out << (violations.size() > 1 ? "s" : "") << ":";
    for (RuleViolation v : violations) {
        out << "\n- " << rule_for(v);
    }
    out << "\nAnswer again, following every rule.";
    return out.str();
}

bool mentions_camera_label(const std::string& text, const CameraRig& rig) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const RigCamera& cam : rig.cameras) {
        std::string name = cam.name;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        if (!name.empty() && lower.find(name) != std::string::npos) {
            return true;
        }
    }
    return false;
}

} // namespace

SelectionResult select_view(ChatClient& client, const std::string& task, const CameraRig& rig,
                            std::span<const RgbdFrame> frames, const ViewConfig& view) {
    if (view.max_retries < 0) {
        throw UsageError("select_view: max_retries must be >= 0");
    }
    const PromptBundle bundle = build_prompt(task, rig, frames);

    ChatMessage first;
    first.role = "user";
    first.parts.push_back({MessagePart::Kind::Text, bundle.combined_text(), {}});
    for (const PromptBundle::LabeledImage& img : bundle.images) {
        first.parts.push_back({MessagePart::Kind::Text, "[image: " + img.label + "]", {}});
        first.parts.push_back({MessagePart::Kind::ImagePng, "", img.png});
    }

    std::vector<ChatMessage> messages = {first};
    SelectionResult result;
    result.transcript.push_back(bundle.combined_text());

    const double diagonal = rig.workspace.diagonal();
    for (int attempt = 0; attempt <= view.max_retries; ++attempt) {
        const std::string reply = client.complete(messages);
        ++result.client_calls;
        result.transcript.push_back(reply);

        std::vector<RuleViolation> violations;
        std::optional<ViewpointResponse> parsed;
        try {
            parsed = parse_response(reply);
        } catch (const ResponseParseError&) {
            violations.push_back(RuleViolation::BadFormat);
            if (mentions_camera_label(reply, rig)) {
                violations.push_back(RuleViolation::LabelShortcut);
            }
        }
        if (parsed) {
            const ValidationReport report = validate(*parsed);
            if (report.passed) {
                result.spec.elev = parsed->elev;
                result.spec.azim = parsed->azim;
                result.spec.look_at = rig.workspace.center();
                result.spec.distance = view.distance > 0.0 ? view.distance : 1.2 * diagonal;
                result.spec.half_extent = view.half_extent > 0.0 ? view.half_extent : 0.5 * diagonal;
                result.spec.resolution = view.resolution;
                result.spec.validate();
                return result;
            }
            for (RuleViolation v : report.violations) {
                if (v != RuleViolation::NotAxisPreferred) {
                    violations.push_back(v);
                }
            }
        }

        const std::string feedback = feedback_for(violations);
        result.transcript.push_back(feedback);
        messages.push_back(ChatMessage::text("assistant", reply));
        messages.push_back(ChatMessage::text("user", feedback));
    }

    throw SelectionFailed("view selection failed after " + std::to_string(result.client_calls) +
                              " attempts",
                          result.transcript);
}

} // namespace veye
