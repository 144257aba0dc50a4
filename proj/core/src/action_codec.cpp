#include "veye/action_codec.hpp"

#include "veye/errors.hpp"

#include <algorithm>
#include <cmath>

namespace veye {

namespace {

double wrap_deg(double deg) {
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0) w += 360.0;
    return w - 180.0;  // [-180, 180)
}

int rot_bin_of(double euler_deg) {
    const long bin = std::lround(euler_deg / kRotBinDegrees);
    return static_cast<int>(((bin % kRotBinsPerAxis) + kRotBinsPerAxis) % kRotBinsPerAxis);
}

double rot_bin_center_deg(int bin) {
    return wrap_deg(bin * kRotBinDegrees);
}

} // namespace

std::array<double, 3> euler_xyz_from_quat(const Quat& q) {
    const Eigen::Matrix3d r = q.normalized().toRotationMatrix();
    // R = Rx(a) * Ry(b) * Rz(c)
    const double sb = std::clamp(r(0, 2), -1.0, 1.0);
    const double b = std::asin(sb);
    double a = 0.0;
    double c = 0.0;
    if (std::abs(sb) < 1.0 - 1e-12) {
        a = std::atan2(-r(1, 2), r(2, 2));
        c = std::atan2(-r(0, 1), r(0, 0));
    } else {
        // Gimbal lock: fold the z rotation into x.
        a = std::atan2(r(2, 1), r(1, 1));
        c = 0.0;
    }
    constexpr double kRadToDeg = 180.0 / M_PI;
    return {wrap_deg(a * kRadToDeg), wrap_deg(b * kRadToDeg), wrap_deg(c * kRadToDeg)};
}

Quat quat_from_euler_xyz(const std::array<double, 3>& euler_deg) {
    constexpr double kDegToRad = M_PI / 180.0;
    const Quat qx(Eigen::AngleAxisd(euler_deg[0] * kDegToRad, Vec3::UnitX()));
    const Quat qy(Eigen::AngleAxisd(euler_deg[1] * kDegToRad, Vec3::UnitY()));
    const Quat qz(Eigen::AngleAxisd(euler_deg[2] * kDegToRad, Vec3::UnitZ()));
    return (qx * qy * qz).normalized();
}

double rotation_angle_deg(const Quat& a, const Quat& b) {
    const double dot = std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0);
    return 2.0 * std::acos(dot) * 180.0 / M_PI;
}

bool label_refine(const ActionVector& coarse, const ActionVector& fine) {
    if ((coarse.position - fine.position).norm() > kRefinePositionThresholdMeters) {
        return true;
    }
    return rotation_angle_deg(coarse.rotation, fine.rotation) > kRefineRotationThresholdDegrees;
}

DepthRange depth_range_for(const VirtualCameraSpec& spec, double workspace_diagonal) {
    if (!(workspace_diagonal > 0.0)) {
        throw UsageError("depth_range_for: workspace diagonal must be positive");
    }
    return {spec.distance - workspace_diagonal / 2.0, spec.distance + workspace_diagonal / 2.0};
}

ActionCodec::ActionCodec(const VirtualCameraSpec& spec, double workspace_diagonal, double heatmap_sigma_px)
    : spec_(spec), range_(depth_range_for(spec, workspace_diagonal)), sigma_px_(heatmap_sigma_px) {
    spec_.validate();
    if (!(sigma_px_ > 0.0)) {
        throw UsageError("action codec: heatmap sigma must be positive");
    }
}

double ActionCodec::position_quantization_bound() const {
    return spec_.half_extent * std::sqrt(2.0) / spec_.resolution + range_.width() / (2 * kDepthBins);
}

int ActionCodec::depth_bin_of(double depth) const {
    const double t = (depth - range_.min) / range_.width();
    const int bin = static_cast<int>(std::floor(kDepthBins * t));
    return std::clamp(bin, 0, kDepthBins - 1);
}

double ActionCodec::depth_bin_center(int bin) const {
    return range_.min + (bin + 0.5) * range_.width() / kDepthBins;
}

EncodedActionTarget ActionCodec::encode(const ActionVector& action, bool refine_label) const {
    const int res = spec_.resolution;
    const Projection proj = world_to_pixel(spec_, action.position);
    if (!(proj.u >= 0.0 && proj.u < res && proj.v >= 0.0 && proj.v < res)) {
        throw EncodeOutOfView(proj.u, proj.v);
    }

    EncodedActionTarget target;
    target.resolution = res;
    target.heatmap.assign(static_cast<size_t>(res) * res, 0.0);

    // Isotropic Gaussian at the sub-pixel projection, evaluated at pixel
    // centers, truncated at 3 sigma, renormalized.
    const double radius = 3.0 * sigma_px_;
    const int x0 = std::max(0, static_cast<int>(std::floor(proj.u - radius)));
    const int x1 = std::min(res - 1, static_cast<int>(std::ceil(proj.u + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(proj.v - radius)));
    const int y1 = std::min(res - 1, static_cast<int>(std::ceil(proj.v + radius)));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma_px_ * sigma_px_);
    double sum = 0.0;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = (x + 0.5) - proj.u;
            const double dy = (y + 0.5) - proj.v;
            const double r2 = dx * dx + dy * dy;
            if (r2 > radius * radius) {
                continue;
            }
            const double w = std::exp(-r2 * inv_two_sigma2);
            target.heatmap[static_cast<size_t>(y) * res + x] = w;
            sum += w;
        }
    }
    for (double& w : target.heatmap) {
        w /= sum;
    }

    target.depth_bin = depth_bin_of(proj.depth);

    const std::array<double, 3> euler = euler_xyz_from_quat(action.rotation);
    for (int k = 0; k < 3; ++k) {
        target.rot_bins[k] = rot_bin_of(euler[k]);
    }
    target.open_bit = action.gripper_open;
    target.collision_bit = action.collision_allowed;
    target.refine_label = refine_label;
    return target;
}

ActionVector ActionCodec::decode(const PolicyOutputs& outputs) const {
    if (outputs.resolution != spec_.resolution) {
        throw UsageError("decode: outputs resolution disagrees with the codec's view");
    }
    const int res = spec_.resolution;
    const size_t best = argmax_index(outputs.heatmap_logits);
    const int px = static_cast<int>(best % res);
    const int py = static_cast<int>(best / res);
    const int dbin = static_cast<int>(argmax_index(outputs.depth_logits));
    const double depth = depth_bin_center(dbin);

    ActionVector action;
    // Pixel center, sub-pixel grid.
    action.position = pixel_to_world(spec_, px + 0.5, py + 0.5, depth);

    std::array<double, 3> euler{};
    for (int k = 0; k < 3; ++k) {
        const int bin = static_cast<int>(argmax_index(outputs.rot_logits[k]));
        euler[k] = rot_bin_center_deg(bin);
    }
    action.rotation = quat_from_euler_xyz(euler);
    action.gripper_open = outputs.open_logits[1] > outputs.open_logits[0];
    action.collision_allowed = outputs.collision_logits[1] > outputs.collision_logits[0];
    return action;
}

bool ActionCodec::decode_refine(const PolicyOutputs& outputs) const {
    return outputs.refine_logits[1] > outputs.refine_logits[0];
}

size_t argmax_index(const std::vector<double>& values) {
    size_t best = 0;
    for (size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

PolicyOutputs one_hot_outputs(const EncodedActionTarget& target) {
    PolicyOutputs out;
    out.resolution = target.resolution;
    out.heatmap_logits = target.heatmap;
    out.depth_logits.assign(kDepthBins, 0.0);
    out.depth_logits[target.depth_bin] = 1.0;
    for (int axis = 0; axis < 3; ++axis) {
        out.rot_logits[axis].assign(kRotBinsPerAxis, 0.0);
        out.rot_logits[axis][target.rot_bins[axis]] = 1.0;
    }
    out.open_logits[target.open_bit ? 1 : 0] = 1.0;
    out.collision_logits[target.collision_bit ? 1 : 0] = 1.0;
    out.refine_logits[target.refine_label ? 1 : 0] = 1.0;
    return out;
}

} // namespace veye
