#pragma once

#include "veye/chat_client.hpp"
#include "veye/geometry.hpp"
#include "veye/renderer.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace veye {

// Structured query for the view-selection model: four titled text sections
// plus one annotated environment image and the four raw camera images.
struct PromptBundle {
    std::vector<std::pair<std::string, std::string>> sections;
    struct LabeledImage {
        std::string label;
        std::vector<std::uint8_t> png;
    };
    std::vector<LabeledImage> images;

    std::string combined_text() const;
};

struct ViewpointResponse {
    double elev = 0.0;  // [-90, 90]
    double azim = 0.0;  // [-180, 180)
    std::string rationale;
};

enum class RuleViolation {
    NotAboveTable,     // elev <= 0: camera at or below the table plane
    NotAxisPreferred,  // warning only: azim more than 15 degrees from a 90-degree multiple
    BadFormat,
    LabelShortcut,     // answered with a camera label instead of angles
};

std::string to_string(RuleViolation v);

struct ValidationReport {
    bool passed = true;
    std::vector<RuleViolation> violations;

    bool has(RuleViolation v) const;
};

constexpr double kAxisPreferenceBandDeg = 15.0;

// Rendering + view-conversion knobs carried from config into select_view.
struct ViewConfig {
    double distance = 0.0;     // 0 = derive 1.2 x workspace diagonal
    double half_extent = 0.0;  // 0 = derive 0.5 x workspace diagonal
    int resolution = 224;
    int max_retries = 2;
};

// Workspace wireframe, labeled axes and numbered marks at the fixed camera
// positions; deterministic for a fixed rig.
std::vector<std::uint8_t> build_som_image(const CameraRig& rig, int image_size = 512);

// Four sections (environment, task, examples, rules) and five images
// (annotated environment + the four raw camera views, in rig order).
PromptBundle build_prompt(const std::string& task, const CameraRig& rig, std::span<const RgbdFrame> frames);

// Strict grammar `ELEV=<number>; AZIM=<number>`, case-insensitive, flexible
// whitespace, optional trailing rationale. Azim wraps into [-180, 180).
ViewpointResponse parse_response(const std::string& text);

ValidationReport validate(const ViewpointResponse& resp);

struct SelectionResult {
    VirtualCameraSpec spec;
    std::vector<std::string> transcript;  // alternating prompt/response texts
    int client_calls = 0;
};

// Query -> parse -> validate loop with corrective feedback, at most
// max_retries + 1 client calls. Throws SelectionFailed with the transcript
// when retries run out.
SelectionResult select_view(ChatClient& client, const std::string& task, const CameraRig& rig,
                            std::span<const RgbdFrame> frames, const ViewConfig& view);

} // namespace veye
