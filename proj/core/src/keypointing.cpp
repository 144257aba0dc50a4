#include "veye/keypointing.hpp"

#include "veye/errors.hpp"

#include <cmath>

namespace veye {

std::vector<int> extract_keypoints(const std::vector<bool>& gripper_open,
                                   const std::vector<double>& velocity_norm,
                                   double vel_eps, int min_gap) {
    const size_t n = gripper_open.size();
    if (n != velocity_norm.size()) {
        throw UsageError("extract_keypoints: gripper and velocity arrays differ in length");
    }
    if (n < 2) {
        throw UsageError("extract_keypoints: trajectory must have at least 2 steps");
    }
    if (!(vel_eps > 0.0)) {
        throw UsageError("extract_keypoints: vel_eps must be positive");
    }
    if (min_gap < 1) {
        throw UsageError("extract_keypoints: min_gap must be at least 1");
    }
    for (double v : velocity_norm) {
        if (!std::isfinite(v)) {
            throw UsageError("extract_keypoints: velocities must be finite");
        }
    }

    std::vector<int> kept;
    int last_kept = -1;
    for (int i = 1; i < static_cast<int>(n); ++i) {
        const bool toggle = gripper_open[i] != gripper_open[i - 1];
        const bool dwell = velocity_norm[i] < vel_eps;
        if (toggle) {
            kept.push_back(i);
            last_kept = i;
        } else if (dwell && (last_kept < 0 || i - last_kept >= min_gap)) {
            kept.push_back(i);
            last_kept = i;
        }
    }
    const int final_index = static_cast<int>(n) - 1;
    if (kept.empty() || kept.back() != final_index) {
        kept.push_back(final_index);
    }
    return kept;
}

std::vector<int> extract_keypoints(const Trajectory& traj, double vel_eps, int min_gap) {
    std::vector<bool> open;
    std::vector<double> vel;
    open.reserve(traj.steps.size());
    vel.reserve(traj.steps.size());
    for (const TrajectoryStep& step : traj.steps) {
        open.push_back(step.gripper_open);
        vel.push_back(step.joint_velocity_norm);
    }
    return extract_keypoints(open, vel, vel_eps, min_gap);
}

} // namespace veye
