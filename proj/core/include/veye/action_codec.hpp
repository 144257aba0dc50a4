#pragma once

#include "veye/renderer.hpp"

#include <array>
#include <vector>

namespace veye {

// The 8-D end-effector action: position, rotation, gripper bit, collision bit.
struct ActionVector {
    Vec3 position = Vec3::Zero();
    Quat rotation = Quat::Identity();
    bool gripper_open = true;
    bool collision_allowed = false;
};

// Per-head logits produced by the policy. Bit heads index [0]=false, [1]=true.
struct PolicyOutputs {
    int resolution = 0;
    std::vector<double> heatmap_logits;             // resolution^2, row-major
    std::vector<double> depth_logits;               // n depth bins
    std::array<std::vector<double>, 3> rot_logits;  // per axis, n rotation bins
    std::array<double, 2> open_logits{};
    std::array<double, 2> collision_logits{};
    std::array<double, 2> refine_logits{};
};

// Training target produced by encoding an expert action through a virtual view.
struct EncodedActionTarget {
    int resolution = 0;
    std::vector<double> heatmap;        // nonnegative, sums to 1
    int depth_bin = 0;                  // [0, depth_bins)
    std::array<int, 3> rot_bins{};      // [0, rot_bins_per_axis)
    bool open_bit = false;
    bool collision_bit = false;
    bool refine_label = false;
};

constexpr int kDepthBins = 36;
constexpr int kRotBinsPerAxis = 72;
constexpr double kRotBinDegrees = 5.0;
constexpr double kRefinePositionThresholdMeters = 0.01;
constexpr double kRefineRotationThresholdDegrees = 5.0;

// Intrinsic XYZ Euler angles, degrees, each in [-180, 180).
std::array<double, 3> euler_xyz_from_quat(const Quat& q);
Quat quat_from_euler_xyz(const std::array<double, 3>& euler_deg);

// Geodesic angle between two rotations, degrees in [0, 180].
double rotation_angle_deg(const Quat& a, const Quat& b);

// 1 iff positions differ by more than 0.01 m or rotations by more than 5 degrees.
bool label_refine(const ActionVector& coarse, const ActionVector& fine);

struct DepthRange {
    double min = 0.0;
    double max = 1.0;
    double width() const { return max - min; }
};

// Depth classification window for a view: centered on the camera distance,
// wide enough to cover any workspace point from any direction.
DepthRange depth_range_for(const VirtualCameraSpec& spec, double workspace_diagonal);

// Encoder/decoder bound to one virtual view and one depth window.
class ActionCodec {
public:
    ActionCodec(const VirtualCameraSpec& spec, double workspace_diagonal, double heatmap_sigma_px = 1.5);

    const VirtualCameraSpec& spec() const { return spec_; }
    const DepthRange& depth_range() const { return range_; }
    double sigma_px() const { return sigma_px_; }

    // Worst-case position error of an encode->decode round trip:
    // half-extent sqrt(2)/R in-plane plus one depth-bin width.
    double position_quantization_bound() const;

    EncodedActionTarget encode(const ActionVector& action, bool refine_label) const;
    ActionVector decode(const PolicyOutputs& outputs) const;
    bool decode_refine(const PolicyOutputs& outputs) const;

    int depth_bin_of(double depth) const;
    double depth_bin_center(int bin) const;

private:
    VirtualCameraSpec spec_;
    DepthRange range_;
    double sigma_px_;
};

// Index of the first maximum, row-major.
size_t argmax_index(const std::vector<double>& values);

// Outputs whose argmaxes reproduce the target exactly: the heatmap target
// itself as logits, one-hot bins and bits.
PolicyOutputs one_hot_outputs(const EncodedActionTarget& target);

} // namespace veye
