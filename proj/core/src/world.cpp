#include "veye/world.hpp"

#include "veye/errors.hpp"
#include "veye/image_io.hpp"
#include "veye/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace veye {

namespace {

constexpr int kCamRes = 128;
constexpr double kCamFocal = 110.0;
constexpr double kRigDistance = 1.15;
constexpr double kWristHeight = 0.30;
constexpr double kGraspRadius = 0.02;

constexpr std::array<std::uint8_t, 3> kTableColor = {120, 120, 120};
constexpr std::array<std::uint8_t, 3> kGripperColor = {45, 45, 45};

struct NamedColor {
    const char* name;
    std::array<std::uint8_t, 3> rgb;
};
constexpr NamedColor kRed = {"red", {200, 30, 30}};
constexpr NamedColor kGreen = {"green", {30, 160, 40}};
constexpr NamedColor kBlue = {"blue", {40, 70, 200}};
constexpr NamedColor kYellow = {"yellow", {220, 190, 30}};

Scene base_scene() {
    Scene scene;
    scene.table = {"table", kTableColor, Vec3(0.0, 0.0, -0.025), Vec3(0.3, 0.3, 0.025)};
    scene.workspace.min = Vec3(-0.3, -0.3, -0.01);
    scene.workspace.max = Vec3(0.3, 0.3, 0.35);
    scene.gripper_position = Vec3(0.0, 0.0, 0.28);
    scene.gripper_open = true;
    return scene;
}

CameraIntrinsics rig_intrinsics() {
    CameraIntrinsics k;
    k.fx = k.fy = kCamFocal;
    k.cx = k.cy = kCamRes / 2.0;
    k.width = k.height = kCamRes;
    return k;
}

// Spawn a cube on the table, rejecting overlaps with boxes already placed.
SceneObject spawn_box(Rng& rng, const std::string& id, const NamedColor& color, const Vec3& half,
                      const std::vector<SceneObject>& placed) {
    for (int attempt = 0; attempt < 256; ++attempt) {
        SceneObject obj;
        obj.id = id;
        obj.color = color.rgb;
        obj.half = half;
        obj.center = Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), half.z());
        bool clear = true;
        for (const SceneObject& other : placed) {
            SceneObject padded = other;
            padded.half += Vec3(0.02, 0.02, 0.0);
            if (obj.overlaps_xy(padded)) {
                clear = false;
                break;
            }
        }
        if (clear) return obj;
    }
    throw std::logic_error("spawn_box: no free spot after 256 attempts");
}

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }

struct Segment {
    Vec3 target;
    int move_steps;
    int dwell_steps;
    // -1 none, 0 open->closed, 1 closed->open
    int toggle = -1;
    bool collision_allowed = false;
};

struct ScriptResult {
    Demonstration demo;
    Scene final_scene;
};

// Runs the waypoint script kinematically: smoothstep motion between waypoints,
// exact dwells, gripper toggles at arrival, attachment when closing within
// grasp range of an object center.
ScriptResult run_script(Scene scene, const std::vector<Segment>& segments,
                        const std::string& instruction, const std::string& task_name,
                        const std::string& variation) {
    ScriptResult out;
    out.demo.task_name = task_name;
    out.demo.variation = variation;
    out.demo.trajectory.instruction = instruction;

    int attached = -1;  // index into scene.objects
    Vec3 prev_pos = scene.gripper_position;
    bool collision_now = false;

    auto record_step = [&](double velocity) {
        TrajectoryStep step;
        step.frames = capture_frames(scene);
        step.action.position = scene.gripper_position;
        step.action.rotation = Quat::Identity();
        step.action.gripper_open = scene.gripper_open;
        step.action.collision_allowed = collision_now;
        step.gripper_open = scene.gripper_open;
        step.joint_velocity_norm = velocity;
        out.demo.trajectory.steps.push_back(std::move(step));
    };

    record_step(0.0);

    for (const Segment& seg : segments) {
        collision_now = seg.collision_allowed;
        const Vec3 start = scene.gripper_position;
        for (int k = 1; k <= seg.move_steps; ++k) {
            const double s = smoothstep(static_cast<double>(k) / seg.move_steps);
            scene.gripper_position = start + s * (seg.target - start);
            if (attached >= 0) {
                scene.objects[attached].center = scene.gripper_position;
            }
            record_step((scene.gripper_position - prev_pos).norm());
            prev_pos = scene.gripper_position;
        }
        for (int k = 0; k < seg.dwell_steps; ++k) {
            if (k == 0 && seg.toggle >= 0) {
                scene.gripper_open = seg.toggle == 1;
                if (seg.toggle == 0) {
                    for (size_t i = 0; i < scene.objects.size(); ++i) {
                        if ((scene.objects[i].center - scene.gripper_position).norm() <= kGraspRadius) {
                            attached = static_cast<int>(i);
                            break;
                        }
                    }
                } else {
                    attached = -1;
                }
            }
            record_step(0.0);
        }
    }

    const size_t len = out.demo.trajectory.steps.size();
    if (len < 20 || len > 160) {
        throw std::logic_error("scripted demo length out of range");
    }
    out.final_scene = scene;
    return out;
}

} // namespace

const SceneObject* Scene::find(const std::string& id) const {
    for (const SceneObject& obj : objects) {
        if (obj.id == id) return &obj;
    }
    return nullptr;
}

std::vector<SceneObject> solid_boxes(const Scene& scene) {
    std::vector<SceneObject> boxes;
    boxes.reserve(scene.objects.size() + 2);
    boxes.push_back(scene.table);
    boxes.insert(boxes.end(), scene.objects.begin(), scene.objects.end());
    boxes.push_back({"gripper", kGripperColor, scene.gripper_position, Vec3(0.015, 0.015, 0.015)});
    return boxes;
}

CameraRig rig_for_scene(const Scene& scene) {
    const Vec3 center = scene.workspace.center();
    CameraRig rig;
    rig.workspace = scene.workspace;
    rig.cameras.push_back({"front", rig_intrinsics(), pose_from_angles(15.0, 180.0, kRigDistance, center)});
    rig.cameras.push_back({"left_shoulder", rig_intrinsics(), pose_from_angles(40.0, 120.0, kRigDistance, center)});
    rig.cameras.push_back({"right_shoulder", rig_intrinsics(), pose_from_angles(40.0, -120.0, kRigDistance, center)});
    rig.cameras.push_back({"wrist", rig_intrinsics(), pose_from_angles(90.0, 0.0, kWristHeight, scene.gripper_position)});
    return rig;
}

RgbdFrame raycast_rgbd(const Scene& scene, const RigCamera& camera) {
    RgbdFrame frame;
    frame.name = camera.name;
    frame.width = camera.intrinsics.width;
    frame.height = camera.intrinsics.height;
    frame.intrinsics = camera.intrinsics;
    frame.extrinsics = camera.extrinsics;
    frame.rgb.assign(static_cast<size_t>(frame.width) * frame.height * 3, 0);
    frame.depth.assign(static_cast<size_t>(frame.width) * frame.height, 0.0f);

    const std::vector<SceneObject> boxes = solid_boxes(scene);
    const Eigen::Matrix3d rot = camera.extrinsics.rotation.toRotationMatrix();
    const Vec3& origin = camera.extrinsics.translation;
    const CameraIntrinsics& k = camera.intrinsics;

    for (int v = 0; v < frame.height; ++v) {
        for (int u = 0; u < frame.width; ++u) {
            // Unnormalized ray with unit camera-z component, so the ray
            // parameter equals depth along the optical axis.
            const Vec3 dir = rot * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            double best_t = std::numeric_limits<double>::infinity();
            const SceneObject* best_box = nullptr;
            for (const SceneObject& box : boxes) {
                double t0 = 1e-9;
                double t1 = std::numeric_limits<double>::infinity();
                bool miss = false;
                for (int c = 0; c < 3; ++c) {
                    const double lo = box.center[c] - box.half[c];
                    const double hi = box.center[c] + box.half[c];
                    const double d = dir[c];
                    const double o = origin[c];
                    if (std::abs(d) < 1e-300) {
                        if (o < lo || o > hi) {
                            miss = true;
                            break;
                        }
                        continue;
                    }
                    double ta = (lo - o) / d;
                    double tb = (hi - o) / d;
                    if (ta > tb) std::swap(ta, tb);
                    t0 = std::max(t0, ta);
                    t1 = std::min(t1, tb);
                    if (t0 > t1) {
                        miss = true;
                        break;
                    }
                }
                if (!miss && t0 < best_t) {
                    best_t = t0;
                    best_box = &box;
                }
            }
            if (best_box && best_t <= kMaxSensorDepthMeters) {
                const size_t idx = static_cast<size_t>(v) * frame.width + u;
                frame.depth[idx] = static_cast<float>(best_t);
                frame.rgb[3 * idx + 0] = best_box->color[0];
                frame.rgb[3 * idx + 1] = best_box->color[1];
                frame.rgb[3 * idx + 2] = best_box->color[2];
            }
        }
    }
    return frame;
}

std::vector<RgbdFrame> capture_frames(const Scene& scene) {
    const CameraRig rig = rig_for_scene(scene);
    std::vector<RgbdFrame> frames;
    frames.reserve(rig.cameras.size());
    for (const RigCamera& cam : rig.cameras) {
        frames.push_back(raycast_rgbd(scene, cam));
    }
    return frames;
}

DemoBuild simulate_demo(const std::string& task_name, std::uint64_t seed) {
    Rng rng(seed_for(seed, "world/" + task_name));
    Scene scene = base_scene();

    DemoBuild build;
    const Vec3 half_cube(0.02, 0.02, 0.02);

    if (task_name == "reach") {
        scene.objects.push_back(spawn_box(rng, "target", kRed, half_cube, scene.objects));
        scene.objects.push_back(spawn_box(rng, "distractor1", kBlue, half_cube, scene.objects));
        scene.objects.push_back(spawn_box(rng, "distractor2", kYellow, half_cube, scene.objects));
        const Vec3 target = scene.objects[0].center;
        const std::vector<Segment> script = {
            {target + Vec3(0, 0, 0.10), 8, 2, -1, false},
            {target, 6, 3, 0, true},
        };
        build.initial_scene = scene;
        build.target_position = target;
        ScriptResult r = run_script(scene, script, "reach the red block", task_name, "red");
        build.demo = std::move(r.demo);
        build.final_scene = std::move(r.final_scene);
        return build;
    }

    if (task_name == "stack") {
        scene.objects.push_back(spawn_box(rng, "top", kRed, half_cube, scene.objects));
        scene.objects.push_back(spawn_box(rng, "base", kGreen, half_cube, scene.objects));
        scene.objects.push_back(spawn_box(rng, "distractor1", kBlue, half_cube, scene.objects));
        const Vec3 top = scene.objects[0].center;
        const SceneObject& basebox = scene.objects[1];
        const Vec3 place(basebox.center.x(), basebox.center.y(), basebox.top() + half_cube.z());
        const std::vector<Segment> script = {
            {top + Vec3(0, 0, 0.10), 8, 2, -1, false},
            {top, 5, 1, 0, true},
            {top + Vec3(0, 0, 0.10), 5, 1, -1, false},
            {place + Vec3(0, 0, 0.10), 8, 1, -1, false},
            {place, 5, 1, 1, true},
            {place + Vec3(0, 0, 0.10), 5, 2, -1, false},
        };
        build.initial_scene = scene;
        build.target_position = basebox.center;
        ScriptResult r = run_script(scene, script, "stack the red block on the green block", task_name,
                                    "red on green");
        build.demo = std::move(r.demo);
        build.final_scene = std::move(r.final_scene);
        return build;
    }

    if (task_name == "place_in_bowl") {
        scene.objects.push_back(spawn_box(rng, "block", kRed, half_cube, scene.objects));
        scene.objects.push_back(spawn_box(rng, "bowl", kYellow, Vec3(0.07, 0.07, 0.01), scene.objects));
        scene.objects.push_back(spawn_box(rng, "distractor1", kBlue, half_cube, scene.objects));
        const Vec3 block = scene.objects[0].center;
        const SceneObject& bowl = scene.objects[1];
        const Vec3 place(bowl.center.x(), bowl.center.y(), bowl.top() + half_cube.z());
        const std::vector<Segment> script = {
            {block + Vec3(0, 0, 0.10), 8, 2, -1, false},
            {block, 5, 1, 0, true},
            {block + Vec3(0, 0, 0.10), 5, 1, -1, false},
            {place + Vec3(0, 0, 0.10), 8, 1, -1, false},
            {place, 5, 1, 1, true},
            {place + Vec3(0, 0, 0.10), 5, 2, -1, false},
        };
        build.initial_scene = scene;
        build.target_position = bowl.center;
        ScriptResult r = run_script(scene, script, "put the red block in the yellow bowl", task_name,
                                    "red in yellow bowl");
        build.demo = std::move(r.demo);
        build.final_scene = std::move(r.final_scene);
        return build;
    }

    throw UsageError("unknown task '" + task_name + "' (expected reach, stack or place_in_bowl)");
}

Demonstration make_demo(const std::string& task_name, std::uint64_t seed) {
    DemoBuild build = simulate_demo(task_name, seed);
    if (!task_succeeded(task_name, build.final_scene)) {
        throw std::logic_error("scripted demo failed its own success predicate");
    }
    return std::move(build.demo);
}

bool task_succeeded(const std::string& task_name, const Scene& final_scene) {
    if (task_name == "reach") {
        const SceneObject* target = final_scene.find("target");
        return target && (final_scene.gripper_position - target->center).norm() <= 0.005;
    }
    if (task_name == "stack") {
        const SceneObject* top = final_scene.find("top");
        const SceneObject* base = final_scene.find("base");
        if (!top || !base) return false;
        const double dx = top->center.x() - base->center.x();
        const double dy = top->center.y() - base->center.y();
        const bool aligned = std::sqrt(dx * dx + dy * dy) <= 0.01;
        const bool resting = std::abs(top->center.z() - (base->top() + top->half.z())) <= 1e-6;
        return aligned && resting;
    }
    if (task_name == "place_in_bowl") {
        const SceneObject* block = final_scene.find("block");
        const SceneObject* bowl = final_scene.find("bowl");
        if (!block || !bowl) return false;
        const bool inside = std::abs(block->center.x() - bowl->center.x()) <= bowl->half.x() - block->half.x() &&
                            std::abs(block->center.y() - bowl->center.y()) <= bowl->half.y() - block->half.y();
        const bool resting = std::abs(block->center.z() - (bowl->top() + block->half.z())) <= 1e-6;
        return inside && resting;
    }
    throw UsageError("unknown task '" + task_name + "'");
}

// ---------------------------------------------------------------------------
// Dataset serialization

namespace {

constexpr char kDatasetMagic[4] = {'V', 'E', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void bytes(const std::uint8_t* data, size_t n) { raw(data, n); }
    const std::vector<std::uint8_t>& data() const { return buf_; }

private:
    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return *take(1); }
    std::uint32_t u32() {
        std::uint32_t v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        std::memcpy(&v, take(8), 8);
        return v;
    }
    float f32() {
        float v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    double f64() {
        double v;
        std::memcpy(&v, take(8), 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        const std::uint8_t* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }
    const std::uint8_t* take(size_t n) {
        if (pos_ + n > size_) {
            throw CorruptDataError("dataset: truncated file");
        }
        const std::uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    void seek(size_t pos) {
        if (pos > size_) {
            throw CorruptDataError("dataset: index offset beyond end of file");
        }
        pos_ = pos;
    }
    size_t pos() const { return pos_; }

private:
    const std::uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

void write_frame(Writer& w, const RgbdFrame& frame) {
    w.str(frame.name);
    w.f64(frame.intrinsics.fx);
    w.f64(frame.intrinsics.fy);
    w.f64(frame.intrinsics.cx);
    w.f64(frame.intrinsics.cy);
    w.u32(static_cast<std::uint32_t>(frame.intrinsics.width));
    w.u32(static_cast<std::uint32_t>(frame.intrinsics.height));
    const Quat& q = frame.extrinsics.rotation;
    w.f64(q.w());
    w.f64(q.x());
    w.f64(q.y());
    w.f64(q.z());
    for (int c = 0; c < 3; ++c) w.f64(frame.extrinsics.translation[c]);
    const std::vector<std::uint8_t> png = encode_png_rgb(frame.rgb.data(), frame.width, frame.height);
    w.u32(static_cast<std::uint32_t>(png.size()));
    w.bytes(png.data(), png.size());
    for (float d : frame.depth) w.f32(d);
}

RgbdFrame read_frame(Reader& r) {
    RgbdFrame frame;
    frame.name = r.str();
    frame.intrinsics.fx = r.f64();
    frame.intrinsics.fy = r.f64();
    frame.intrinsics.cx = r.f64();
    frame.intrinsics.cy = r.f64();
    frame.intrinsics.width = static_cast<int>(r.u32());
    frame.intrinsics.height = static_cast<int>(r.u32());
    const double qw = r.f64();
    const double qx = r.f64();
    const double qy = r.f64();
    const double qz = r.f64();
    frame.extrinsics.rotation = Quat(qw, qx, qy, qz);
    for (int c = 0; c < 3; ++c) frame.extrinsics.translation[c] = r.f64();
    const std::uint32_t png_size = r.u32();
    const std::uint8_t* png = r.take(png_size);
    int w = 0;
    int h = 0;
    frame.rgb = decode_png_rgb(png, png_size, w, h);
    if (w != frame.intrinsics.width || h != frame.intrinsics.height) {
        throw CorruptDataError("dataset: frame PNG size disagrees with intrinsics");
    }
    frame.width = w;
    frame.height = h;
    frame.depth.resize(static_cast<size_t>(w) * h);
    for (float& d : frame.depth) d = r.f32();
    return frame;
}

void write_demo(Writer& w, const Demonstration& demo) {
    w.str(demo.trajectory.instruction);
    w.str(demo.task_name);
    w.str(demo.variation);
    w.u32(static_cast<std::uint32_t>(demo.trajectory.steps.size()));
    for (const TrajectoryStep& step : demo.trajectory.steps) {
        if (step.frames.size() != 4) {
            throw UsageError("dataset: every step must carry exactly 4 frames");
        }
        for (const RgbdFrame& frame : step.frames) write_frame(w, frame);
        for (int c = 0; c < 3; ++c) w.f64(step.action.position[c]);
        const Quat& q = step.action.rotation;
        w.f64(q.w());
        w.f64(q.x());
        w.f64(q.y());
        w.f64(q.z());
        w.u8(step.action.gripper_open ? 1 : 0);
        w.u8(step.action.collision_allowed ? 1 : 0);
        w.f64(step.joint_velocity_norm);
    }
}

Demonstration read_demo(Reader& r) {
    Demonstration demo;
    demo.trajectory.instruction = r.str();
    demo.task_name = r.str();
    demo.variation = r.str();
    const std::uint32_t steps = r.u32();
    demo.trajectory.steps.reserve(steps);
    for (std::uint32_t i = 0; i < steps; ++i) {
        TrajectoryStep step;
        step.frames.reserve(4);
        for (int f = 0; f < 4; ++f) step.frames.push_back(read_frame(r));
        for (int c = 0; c < 3; ++c) step.action.position[c] = r.f64();
        const double qw = r.f64();
        const double qx = r.f64();
        const double qy = r.f64();
        const double qz = r.f64();
        step.action.rotation = Quat(qw, qx, qy, qz);
        step.action.gripper_open = r.u8() != 0;
        step.action.collision_allowed = r.u8() != 0;
        step.joint_velocity_norm = r.f64();
        step.gripper_open = step.action.gripper_open;
        demo.trajectory.steps.push_back(std::move(step));
    }
    return demo;
}

} // namespace

void write_dataset(const std::string& path, std::span<const Demonstration> demos) {
    std::vector<Writer> blocks(demos.size());
    for (size_t i = 0; i < demos.size(); ++i) {
        write_demo(blocks[i], demos[i]);
    }

    Writer header;
    header.bytes(reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 4);
    header.u32(kDatasetVersion);
    header.u32(static_cast<std::uint32_t>(demos.size()));
    std::uint64_t offset = header.data().size() + 8ull * demos.size();
    for (const Writer& block : blocks) {
        header.u64(offset);
        offset += block.data().size();
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("dataset: cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(header.data().data()),
              static_cast<std::streamsize>(header.data().size()));
    for (const Writer& block : blocks) {
        out.write(reinterpret_cast<const char*>(block.data().data()),
                  static_cast<std::streamsize>(block.data().size()));
    }
    if (!out) {
        throw UsageError("dataset: short write to " + path);
    }
}

std::vector<Demonstration> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("dataset: cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(bytes.data(), bytes.size());

    char magic[4];
    std::memcpy(magic, r.take(4), 4);
    if (std::memcmp(magic, kDatasetMagic, 4) != 0) {
        throw CorruptDataError("dataset: bad magic");
    }
    if (r.u32() != kDatasetVersion) {
        throw CorruptDataError("dataset: unsupported version");
    }
    const std::uint32_t count = r.u32();
    std::vector<std::uint64_t> offsets(count);
    for (std::uint32_t i = 0; i < count; ++i) offsets[i] = r.u64();

    std::vector<Demonstration> demos;
    demos.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        r.seek(offsets[i]);
        demos.push_back(read_demo(r));
    }
    return demos;
}

} // namespace veye
