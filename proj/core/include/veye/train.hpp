#pragma once

#include "veye/policy.hpp"

#include <string>
#include <vector>

namespace veye {

// Adam with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * theta )
struct OptimizerSettings {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // global-norm clip; 0 disables
};

struct TrainSample {
    VirtualImage image;
    std::string instruction;
    EncodedActionTarget target;
    ActionVector expert_action;
};

struct TrainSettings {
    int steps = 1000;
    int batch_size = 8;
    OptimizerSettings opt;
    std::uint64_t seed = 0;
    std::string metrics_csv;  // per-step loss breakdown; empty disables the log

    // When > 0: every check_every steps evaluate the full training set and
    // stop once every loss term falls below the threshold.
    double stop_when_terms_below = 0.0;
    int check_every = 25;
};

struct TrainResult {
    int steps_run = 0;
    LossBreakdown final_loss;  // mean over the full training set
};

template <typename T>
LossBreakdown mean_loss(const PolicyNet<T>& net, const std::vector<TrainSample>& samples,
                        const DepthRange& range);

// Deterministic given the settings seed; throws on nonfinite loss.
template <typename T>
TrainResult train(PolicyNet<T>& net, const std::vector<TrainSample>& samples, const DepthRange& range,
                  const TrainSettings& settings);

} // namespace veye
