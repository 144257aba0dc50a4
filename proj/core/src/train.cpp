#include "veye/train.hpp"

#include "veye/errors.hpp"
#include "veye/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace veye {

namespace {

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b) {
    acc.trans += b.trans;
    acc.rot += b.rot;
    acc.open += b.open;
    acc.collision += b.collision;
    acc.depth += b.depth;
    acc.dyn_inf += b.dyn_inf;
    for (int i = 0; i < 3; ++i) acc.rot_axes[i] += b.rot_axes[i];
}

void scale_breakdown(LossBreakdown& acc, double s) {
    acc.trans *= s;
    acc.rot *= s;
    acc.open *= s;
    acc.collision *= s;
    acc.depth *= s;
    acc.dyn_inf *= s;
    for (int i = 0; i < 3; ++i) acc.rot_axes[i] *= s;
}

bool all_terms_below(const LossBreakdown& b, double threshold) {
    return b.trans < threshold && b.rot < threshold && b.open < threshold &&
           b.collision < threshold && b.depth < threshold && b.dyn_inf < threshold;
}

} // namespace

template <typename T>
LossBreakdown mean_loss(const PolicyNet<T>& net, const std::vector<TrainSample>& samples,
                        const DepthRange& range) {
    LossBreakdown acc;
    for (const TrainSample& sample : samples) {
        const LanguageEncoding lang =
            encode_language(sample.instruction, net.config().n_lang_tokens, net.config().embed_dim);
        const PolicyOutputs out = net.forward(sample.image, range, lang);
        add_breakdown(acc, loss(out, sample.target));
    }
    scale_breakdown(acc, 1.0 / static_cast<double>(samples.size()));
    return acc;
}

template <typename T>
TrainResult train(PolicyNet<T>& net, const std::vector<TrainSample>& samples, const DepthRange& range,
                  const TrainSettings& settings) {
    if (samples.empty()) {
        throw UsageError("train: dataset must not be empty");
    }
    if (settings.batch_size <= 0) {
        throw UsageError("train: batch size must be positive");
    }

    const ModelConfig& cfg = net.config();

    // Tokenize once up front; samples are reused every epoch.
    std::vector<MatrixX<T>> patches;
    std::vector<MatrixX<T>> lang_tokens;
    patches.reserve(samples.size());
    lang_tokens.reserve(samples.size());
    for (const TrainSample& sample : samples) {
        patches.push_back(PolicyNet<T>::extract_patches(sample.image, range, cfg));
        lang_tokens.push_back(
            encode_language(sample.instruction, cfg.n_lang_tokens, cfg.embed_dim).tokens.template cast<T>());
    }

    ParamSet<T> grads = net.params().zeros_like();
    ParamSet<T> m = net.params().zeros_like();
    ParamSet<T> v = net.params().zeros_like();

    std::ofstream csv;
    if (!settings.metrics_csv.empty()) {
        csv.open(settings.metrics_csv);
        if (!csv) {
            throw UsageError("train: cannot write metrics log " + settings.metrics_csv);
        }
        csv << "step,total,trans,rot,open,collision,depth,dyn_inf\n";
    }

    Rng rng(seed_for(settings.seed, "train/batches"));
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size();  // forces an initial shuffle

    const OptimizerSettings& opt = settings.opt;
    TrainResult result;

    for (int step = 1; step <= settings.steps; ++step) {
        grads.set_zero();
        LossBreakdown batch_loss;
        const int batch = std::min<int>(settings.batch_size, static_cast<int>(samples.size()));
        for (int b = 0; b < batch; ++b) {
            if (cursor >= order.size()) {
                for (size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);
                }
                cursor = 0;
            }
            const size_t idx = order[cursor++];
            add_breakdown(batch_loss,
                          net.loss_and_grad(patches[idx], lang_tokens[idx], samples[idx].target, grads));
        }
        scale_breakdown(batch_loss, 1.0 / batch);
        if (!std::isfinite(batch_loss.total())) {
            throw std::runtime_error("train: nonfinite loss at step " + std::to_string(step) +
                                     " (total=" + std::to_string(batch_loss.total()) + ")");
        }

        const T inv_batch = T(1) / static_cast<T>(batch);
        for (auto& e : grads.entries()) e.value *= inv_batch;

        if (opt.grad_clip > 0.0) {
            double sq = 0.0;
            for (const auto& e : grads.entries()) sq += static_cast<double>(e.value.squaredNorm());
            const double norm = std::sqrt(sq);
            if (norm > opt.grad_clip) {
                const T s = static_cast<T>(opt.grad_clip / norm);
                for (auto& e : grads.entries()) e.value *= s;
            }
        }

        const double bc1 = 1.0 - std::pow(opt.beta1, step);
        const double bc2 = 1.0 - std::pow(opt.beta2, step);
        for (size_t t = 0; t < grads.entries().size(); ++t) {
            auto& g = grads.entries()[t].value;
            auto& mt = m.entries()[t].value;
            auto& vt = v.entries()[t].value;
            auto& theta = net.params().entries()[t].value;
            mt = static_cast<T>(opt.beta1) * mt + static_cast<T>(1.0 - opt.beta1) * g;
            vt = static_cast<T>(opt.beta2) * vt +
                 static_cast<T>(1.0 - opt.beta2) * g.cwiseProduct(g);
            const T lr = static_cast<T>(opt.lr);
            const T eps = static_cast<T>(opt.eps);
            theta.array() -= lr * ((mt.array() / static_cast<T>(bc1)) /
                                       ((vt.array() / static_cast<T>(bc2)).sqrt() + eps) +
                                   static_cast<T>(opt.weight_decay) * theta.array());
        }

        if (csv.is_open()) {
            csv << step << ',' << batch_loss.total() << ',' << batch_loss.trans << ','
                << batch_loss.rot << ',' << batch_loss.open << ',' << batch_loss.collision << ','
                << batch_loss.depth << ',' << batch_loss.dyn_inf << '\n';
        }

        result.steps_run = step;
        if (settings.stop_when_terms_below > 0.0 && step % settings.check_every == 0) {
            const LossBreakdown full = mean_loss(net, samples, range);
            if (all_terms_below(full, settings.stop_when_terms_below)) {
                result.final_loss = full;
                return result;
            }
        }
    }

    result.final_loss = mean_loss(net, samples, range);
    return result;
}

template LossBreakdown mean_loss<float>(const PolicyNet<float>&, const std::vector<TrainSample>&,
                                        const DepthRange&);
template LossBreakdown mean_loss<double>(const PolicyNet<double>&, const std::vector<TrainSample>&,
                                         const DepthRange&);
template TrainResult train<float>(PolicyNet<float>&, const std::vector<TrainSample>&, const DepthRange&,
                                  const TrainSettings&);
template TrainResult train<double>(PolicyNet<double>&, const std::vector<TrainSample>&,
                                   const DepthRange&, const TrainSettings&);

} // namespace veye
