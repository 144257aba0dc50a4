#pragma once

#include "veye/geometry.hpp"
#include "veye/keypointing.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace veye {

// Axis-aligned colored box; the only solid the synthetic world knows.
struct SceneObject {
    std::string id;
    std::array<std::uint8_t, 3> color{};
    Vec3 center = Vec3::Zero();
    Vec3 half = Vec3::Zero();

    double top() const { return center.z() + half.z(); }
    bool overlaps_xy(const SceneObject& other) const {
        return std::abs(center.x() - other.center.x()) < half.x() + other.half.x() &&
               std::abs(center.y() - other.center.y()) < half.y() + other.half.y();
    }
};

// Tabletop scene plus the kinematic end-effector marker.
struct Scene {
    SceneObject table;
    std::vector<SceneObject> objects;
    Vec3 gripper_position = Vec3::Zero();
    bool gripper_open = true;
    WorkspaceBounds workspace;

    const SceneObject* find(const std::string& id) const;
};

// Everything the rays can hit: table, objects, gripper marker.
std::vector<SceneObject> solid_boxes(const Scene& scene);

// Four fixed cameras (front, left_shoulder, right_shoulder, wrist) at 128x128.
// The wrist camera hangs above the current gripper position.
CameraRig rig_for_scene(const Scene& scene);

// Analytic per-pixel ray vs box intersection; noiseless. Misses get depth 0.
RgbdFrame raycast_rgbd(const Scene& scene, const RigCamera& camera);

// All four rig cameras in rig order.
std::vector<RgbdFrame> capture_frames(const Scene& scene);

struct Demonstration {
    Trajectory trajectory;
    std::string task_name;
    std::string variation;
};

inline const std::array<std::string, 3> kTaskNames = {"reach", "stack", "place_in_bowl"};

// Scripted waypoint expert, deterministic per seed; object poses randomize
// over the table per seed.
Demonstration make_demo(const std::string& task_name, std::uint64_t seed);

// make_demo plus the surrounding state, for inspection and tests.
struct DemoBuild {
    Demonstration demo;
    Scene initial_scene;
    Scene final_scene;
    Vec3 target_position;  // task target: object center (reach/stack) or bowl center
};

DemoBuild simulate_demo(const std::string& task_name, std::uint64_t seed);

bool task_succeeded(const std::string& task_name, const Scene& final_scene);

// Dataset files: magic "VEDS", version 1, count, index table, per-demo blocks.
void write_dataset(const std::string& path, std::span<const Demonstration> demos);
std::vector<Demonstration> read_dataset(const std::string& path);

} // namespace veye
