#pragma once

#include "veye/action_codec.hpp"
#include "veye/geometry.hpp"

#include <string>
#include <vector>

namespace veye {

// One demonstration step: observations, the expert action taken, and the
// scalar speed used by the dwell heuristic.
struct TrajectoryStep {
    std::vector<RgbdFrame> frames;   // the four fixed cameras
    ActionVector action;
    double joint_velocity_norm = 0.0;
    bool gripper_open = true;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    std::string instruction;
};

constexpr double kDefaultVelEps = 1e-3;
constexpr int kDefaultMinGap = 2;

// Sparse keyframe indices: gripper-state changes plus near-zero-velocity
// dwells, min-gap suppressed, final step always included. State-change
// candidates are never suppressed; velocity candidates follow
// earlier-kept-wins.
std::vector<int> extract_keypoints(const Trajectory& traj,
                                   double vel_eps = kDefaultVelEps,
                                   int min_gap = kDefaultMinGap);

// Same heuristics on plain arrays, for callers that never materialize frames.
std::vector<int> extract_keypoints(const std::vector<bool>& gripper_open,
                                   const std::vector<double>& velocity_norm,
                                   double vel_eps = kDefaultVelEps,
                                   int min_gap = kDefaultMinGap);

} // namespace veye
