#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace veye {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    // fx,fy > 0; principal point inside the image.
    void validate() const;
};

// Rigid body transform as unit quaternion + translation.
struct RigidTransform {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    // (a.compose(b)).apply(p) == a.apply(b.apply(p))
    RigidTransform compose(const RigidTransform& other) const {
        RigidTransform out;
        out.rotation = (rotation * other.rotation).normalized();
        out.translation = rotation * other.translation + translation;
        return out;
    }

    RigidTransform inverse() const {
        RigidTransform out;
        out.rotation = rotation.conjugate();
        out.translation = -(out.rotation * translation);
        return out;
    }
};

// One fixed camera's registered color+depth image.
// Depth is meters along the camera z axis; 0 marks an invalid pixel.
struct RgbdFrame {
    std::string name;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;   // height*width*3, row-major
    std::vector<float> depth;        // height*width, row-major
    CameraIntrinsics intrinsics;
    RigidTransform extrinsics;       // camera -> world

    std::uint8_t* rgb_at(int x, int y) { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
    const std::uint8_t* rgb_at(int x, int y) const { return rgb.data() + 3 * (static_cast<size_t>(y) * width + x); }
    float depth_at(int x, int y) const { return depth[static_cast<size_t>(y) * width + x]; }

    void validate() const;
};

struct PointCloud {
    std::vector<Vec3> points;                     // world frame, meters
    std::vector<std::array<std::uint8_t, 3>> colors;

    size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    void append(const PointCloud& other);
};

struct WorkspaceBounds {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    bool contains(const Vec3& p) const {
        return p.x() >= min.x() && p.x() <= max.x() &&
               p.y() >= min.y() && p.y() <= max.y() &&
               p.z() >= min.z() && p.z() <= max.z();
    }
    Vec3 center() const { return 0.5 * (min + max); }
    double diagonal() const { return (max - min).norm(); }
    void validate() const;
};

constexpr double kMaxSensorDepthMeters = 10.0;

// Orthonormal camera axes shared by physical pose construction and the
// virtual orthographic camera. Camera frame: x = image right, y = image down,
// z = forward (camera-forward convention).
struct CameraAxes {
    Vec3 right;
    Vec3 down;
    Vec3 forward;
};

// Unit vector from a look-at point toward a camera placed at (elev, azim).
// z-up world; elev from the horizontal plane; azim counterclockwise from +x about +z.
Vec3 direction_from_angles(double elev_deg, double azim_deg);

// Axes for a camera looking along `forward`. World +z projected into the image
// plane points up in the image; at the +-90 degree degeneracy, +x is image-up.
CameraAxes axes_for_forward(const Vec3& forward);

// Camera->world pose at distance along dir(elev, azim) from look_at, optical
// axis pointing back at look_at.
RigidTransform pose_from_angles(double elev_deg, double azim_deg, double distance, const Vec3& look_at);

// One point per valid-depth pixel, row-major pixel order.
PointCloud backproject(const RgbdFrame& frame);

// Per-frame backprojections concatenated in frame order, cropped to bounds.
PointCloud fuse(std::span<const RgbdFrame> frames, const WorkspaceBounds& bounds);

struct PixelDepth {
    double u;
    double v;
    double depth;
};

// Pinhole projection of a world point into a camera (inverse of backproject
// for a single pixel). Behind-camera points return depth <= 0.
PixelDepth project_to_camera(const CameraIntrinsics& intr, const RigidTransform& cam_to_world, const Vec3& p_world);

// Camera rig + workspace description, loadable from JSON.
struct RigCamera {
    std::string name;
    CameraIntrinsics intrinsics;
    RigidTransform extrinsics;  // camera -> world
};

struct CameraRig {
    std::vector<RigCamera> cameras;
    WorkspaceBounds workspace;
};

CameraRig load_rig_json(const std::string& path);
void save_rig_json(const CameraRig& rig, const std::string& path);
CameraRig rig_from_json_text(const std::string& text);
std::string rig_to_json_text(const CameraRig& rig);

} // namespace veye
