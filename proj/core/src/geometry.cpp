#include "veye/geometry.hpp"

#include "veye/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace veye {

namespace {
constexpr double kDegToRad = M_PI / 180.0;
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw UsageError("intrinsics: focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw UsageError("intrinsics: image size must be positive");
    }
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
        throw UsageError("intrinsics: principal point must lie inside the image");
    }
}

void RgbdFrame::validate() const {
    intrinsics.validate();
    if (width != intrinsics.width || height != intrinsics.height) {
        throw UsageError("frame '" + name + "': image size disagrees with intrinsics");
    }
    const size_t n = static_cast<size_t>(width) * height;
    if (rgb.size() != 3 * n || depth.size() != n) {
        throw UsageError("frame '" + name + "': rgb and depth dimensions mismatch");
    }
    for (float d : depth) {
        if (!(d == 0.0f || (d > 0.0f && d <= kMaxSensorDepthMeters))) {
            throw UsageError("frame '" + name + "': depth values must be 0 or in (0, 10] m");
        }
    }
}

void WorkspaceBounds::validate() const {
    if (!(min.x() < max.x() && min.y() < max.y() && min.z() < max.z())) {
        throw UsageError("workspace bounds: min must be componentwise below max");
    }
}

void PointCloud::append(const PointCloud& other) {
    points.insert(points.end(), other.points.begin(), other.points.end());
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
}

Vec3 direction_from_angles(double elev_deg, double azim_deg) {
    const double e = elev_deg * kDegToRad;
    const double a = azim_deg * kDegToRad;
    return {std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e)};
}

CameraAxes axes_for_forward(const Vec3& forward) {
    const Vec3 f = forward.normalized();
    // Up reference: world +z, or +x when the view is (anti)parallel to z.
    Vec3 up_ref = Vec3::UnitZ();
    if (std::abs(f.dot(up_ref)) > 1.0 - 1e-9) {
        up_ref = Vec3::UnitX();
    }
    const Vec3 image_up = (up_ref - f.dot(up_ref) * f).normalized();
    CameraAxes axes;
    axes.forward = f;
    axes.right = f.cross(image_up);
    axes.down = -image_up;
    return axes;
}

RigidTransform pose_from_angles(double elev_deg, double azim_deg, double distance, const Vec3& look_at) {
    if (!(distance > 0.0)) {
        throw UsageError("pose_from_angles: distance must be positive");
    }
    if (elev_deg < -90.0 || elev_deg > 90.0) {
        throw UsageError("pose_from_angles: elev must lie in [-90, 90]");
    }
    const Vec3 dir = direction_from_angles(elev_deg, azim_deg);
    const Vec3 center = look_at + distance * dir;
    const CameraAxes axes = axes_for_forward(-dir);

    Eigen::Matrix3d rot;
    rot.col(0) = axes.right;
    rot.col(1) = axes.down;
    rot.col(2) = axes.forward;

    RigidTransform pose;
    pose.rotation = Quat(rot).normalized();
    pose.translation = center;
    return pose;
}

PointCloud backproject(const RgbdFrame& frame) {
    frame.validate();
    PointCloud cloud;
    cloud.points.reserve(static_cast<size_t>(frame.width) * frame.height);
    cloud.colors.reserve(cloud.points.capacity());

    const Eigen::Matrix3d rot = frame.extrinsics.rotation.toRotationMatrix();
    const Vec3& t = frame.extrinsics.translation;
    const CameraIntrinsics& k = frame.intrinsics;

    for (int v = 0; v < frame.height; ++v) {
        for (int u = 0; u < frame.width; ++u) {
            const double d = frame.depth_at(u, v);
            if (d <= 0.0) {
                continue;
            }
            const Vec3 p_cam((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d);
            cloud.points.push_back(rot * p_cam + t);
            const std::uint8_t* c = frame.rgb_at(u, v);
            cloud.colors.push_back({c[0], c[1], c[2]});
        }
    }
    return cloud;
}

PointCloud fuse(std::span<const RgbdFrame> frames, const WorkspaceBounds& bounds) {
    if (frames.empty()) {
        throw UsageError("fuse: at least one frame required");
    }
    bounds.validate();
    PointCloud fused;
    for (const RgbdFrame& frame : frames) {
        const PointCloud cloud = backproject(frame);
        for (size_t i = 0; i < cloud.size(); ++i) {
            if (bounds.contains(cloud.points[i])) {
                fused.points.push_back(cloud.points[i]);
                fused.colors.push_back(cloud.colors[i]);
            }
        }
    }
    return fused;
}

PixelDepth project_to_camera(const CameraIntrinsics& intr, const RigidTransform& cam_to_world, const Vec3& p_world) {
    const Vec3 p_cam = cam_to_world.inverse().apply(p_world);
    PixelDepth out;
    out.depth = p_cam.z();
    if (p_cam.z() != 0.0) {
        out.u = intr.fx * p_cam.x() / p_cam.z() + intr.cx;
        out.v = intr.fy * p_cam.y() / p_cam.z() + intr.cy;
    } else {
        out.u = out.v = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

namespace {

using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw UsageError("rig json: expected a 3-element array");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

} // namespace

std::string rig_to_json_text(const CameraRig& rig) {
    json j;
    j["workspace"]["min"] = vec3_to_json(rig.workspace.min);
    j["workspace"]["max"] = vec3_to_json(rig.workspace.max);
    j["cameras"] = json::array();
    for (const RigCamera& cam : rig.cameras) {
        json c;
        c["name"] = cam.name;
        c["intrinsics"] = {
            {"fx", cam.intrinsics.fx}, {"fy", cam.intrinsics.fy},
            {"cx", cam.intrinsics.cx}, {"cy", cam.intrinsics.cy},
            {"width", cam.intrinsics.width}, {"height", cam.intrinsics.height},
        };
        const Quat& q = cam.extrinsics.rotation;
        c["extrinsics"] = {
            {"quaternion", json::array({q.w(), q.x(), q.y(), q.z()})},
            {"translation", vec3_to_json(cam.extrinsics.translation)},
        };
        j["cameras"].push_back(std::move(c));
    }
    return j.dump(2);
}

CameraRig rig_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw UsageError(std::string("rig json: parse failure: ") + e.what());
    }
    try {
        CameraRig rig;
        rig.workspace.min = vec3_from_json(j.at("workspace").at("min"));
        rig.workspace.max = vec3_from_json(j.at("workspace").at("max"));
        rig.workspace.validate();
        for (const json& c : j.at("cameras")) {
            RigCamera cam;
            cam.name = c.at("name").get<std::string>();
            const json& k = c.at("intrinsics");
            cam.intrinsics.fx = k.at("fx").get<double>();
            cam.intrinsics.fy = k.at("fy").get<double>();
            cam.intrinsics.cx = k.at("cx").get<double>();
            cam.intrinsics.cy = k.at("cy").get<double>();
            cam.intrinsics.width = k.at("width").get<int>();
            cam.intrinsics.height = k.at("height").get<int>();
            cam.intrinsics.validate();
            const json& e = c.at("extrinsics");
            const json& q = e.at("quaternion");
            if (!q.is_array() || q.size() != 4) {
                throw UsageError("rig json: quaternion must be [w, x, y, z]");
            }
            cam.extrinsics.rotation =
                Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()).normalized();
            cam.extrinsics.translation = vec3_from_json(e.at("translation"));
            rig.cameras.push_back(std::move(cam));
        }
        return rig;
    } catch (const json::exception& e) {
        throw UsageError(std::string("rig json: missing or mistyped field: ") + e.what());
    }
}

CameraRig load_rig_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("rig json: cannot open " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return rig_from_json_text(ss.str());
}

void save_rig_json(const CameraRig& rig, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("rig json: cannot write " + path);
    }
    out << rig_to_json_text(rig) << "\n";
}

} // namespace veye
