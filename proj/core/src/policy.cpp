#include "veye/policy.hpp"

#include "veye/errors.hpp"
#include "veye/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace veye {

namespace {

constexpr double kLnEps = 1e-5;

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
    return cdf + x * pdf;
}

// loss term = CE - H(target) = KL(target || softmax(logits)); dlogits = softmax - target.
template <typename T>
double xent_distribution(const T* logits, const double* target, int n, T* dlogits) {
    T maxv = logits[0];
    for (int i = 1; i < n; ++i) maxv = std::max(maxv, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i] - maxv));
    const double log_z = std::log(sum) + static_cast<double>(maxv);
    double ce = 0.0;
    double entropy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double q = std::exp(static_cast<double>(logits[i]) - log_z);
        if (dlogits) dlogits[i] = static_cast<T>(q - target[i]);
        if (target[i] > 0.0) {
            ce -= target[i] * (static_cast<double>(logits[i]) - log_z);
            entropy -= target[i] * std::log(target[i]);
        }
    }
    return ce - entropy;
}

template <typename T>
double xent_onehot(const T* logits, int index, int n, T* dlogits) {
    T maxv = logits[0];
    for (int i = 1; i < n; ++i) maxv = std::max(maxv, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i] - maxv));
    const double log_z = std::log(sum) + static_cast<double>(maxv);
    if (dlogits) {
        for (int i = 0; i < n; ++i) {
            const double q = std::exp(static_cast<double>(logits[i]) - log_z);
            dlogits[i] = static_cast<T>(q - (i == index ? 1.0 : 0.0));
        }
    }
    return log_z - static_cast<double>(logits[index]);
}

template <typename T>
void layernorm_fwd(const MatrixX<T>& x, const MatrixX<T>& gain, const MatrixX<T>& bias,
                   MatrixX<T>& y, MatrixX<T>& rstd, MatrixX<T>& mean) {
    const int rows = static_cast<int>(x.rows());
    const int cols = static_cast<int>(x.cols());
    y.resize(rows, cols);
    rstd.resize(rows, 1);
    mean.resize(rows, 1);
    for (int i = 0; i < rows; ++i) {
        const T mu = x.row(i).mean();
        const T var = (x.row(i).array() - mu).square().mean();
        const T r = T(1) / std::sqrt(var + T(kLnEps));
        mean(i, 0) = mu;
        rstd(i, 0) = r;
        y.row(i) = (((x.row(i).array() - mu) * r) * gain.row(0).array() + bias.row(0).array()).matrix();
    }
}

template <typename T>
void layernorm_bwd(const MatrixX<T>& dy, const MatrixX<T>& x, const MatrixX<T>& gain,
                   const MatrixX<T>& rstd, const MatrixX<T>& mean,
                   MatrixX<T>& dx_accum, MatrixX<T>& dgain, MatrixX<T>& dbias) {
    const int rows = static_cast<int>(x.rows());
    const int cols = static_cast<int>(x.cols());
    for (int i = 0; i < rows; ++i) {
        const T r = rstd(i, 0);
        const T mu = mean(i, 0);
        Eigen::Array<T, 1, Eigen::Dynamic> xhat = (x.row(i).array() - mu) * r;
        Eigen::Array<T, 1, Eigen::Dynamic> dyr = dy.row(i).array();
        dgain.row(0).array() += dyr * xhat;
        dbias.row(0).array() += dyr;
        Eigen::Array<T, 1, Eigen::Dynamic> dxhat = dyr * gain.row(0).array();
        const T m1 = dxhat.sum() / T(cols);
        const T m2 = (dxhat * xhat).sum() / T(cols);
        dx_accum.row(i).array() += r * (dxhat - m1 - xhat * m2);
    }
}

} // namespace

void ModelConfig::validate() const {
    if (image_size <= 0 || patch <= 0 || image_size % patch != 0) {
        throw UsageError("model config: image_size must be a positive multiple of patch");
    }
    const int g = image_size / patch;
    if (g * g != n_image_tokens) {
        throw UsageError("model config: (image_size/patch)^2 must equal n_image_tokens");
    }
    if (n_lang_tokens <= 0 || n_depth_tokens <= 0 || layers <= 0 || hidden_dim <= 0 ||
        rot_bins_per_axis <= 0) {
        throw UsageError("model config: token counts, layers and widths must be positive");
    }
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) {
        throw UsageError("model config: embed_dim must be a positive multiple of heads");
    }
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
MatrixX<T>& ParamSet<T>::add(const std::string& name, int rows, int cols) {
    if (index_.count(name)) {
        throw UsageError("param set: duplicate tensor " + name);
    }
    index_[name] = entries_.size();
    entries_.push_back({name, MatrixX<T>::Zero(rows, cols)});
    return entries_.back().value;
}

template <typename T>
MatrixX<T>& ParamSet<T>::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("param set: unknown tensor " + name);
    }
    return entries_[it->second].value;
}

template <typename T>
const MatrixX<T>& ParamSet<T>::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw UsageError("param set: unknown tensor " + name);
    }
    return entries_[it->second].value;
}

template <typename T>
size_t ParamSet<T>::total_elements() const {
    size_t n = 0;
    for (const Entry& e : entries_) n += static_cast<size_t>(e.value.size());
    return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet<T> out;
    for (const Entry& e : entries_) {
        out.add(e.name, static_cast<int>(e.value.rows()), static_cast<int>(e.value.cols()));
    }
    return out;
}

template <typename T>
void ParamSet<T>::set_zero() {
    for (Entry& e : entries_) e.value.setZero();
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
struct PolicyNet<T>::Activations {
    struct Layer {
        MatrixX<T> x_in;
        MatrixX<T> rstd1, mean1, h1;
        MatrixX<T> Q, K, V;
        std::vector<MatrixX<T>> A;  // per-head softmax, S x S
        MatrixX<T> O;               // heads concatenated
        MatrixX<T> x2;
        MatrixX<T> rstd2, mean2, h2;
        MatrixX<T> F1, G;
    };
    std::vector<Layer> layers;
    MatrixX<T> x_final;
    MatrixX<T> rstdf, meanf, Y;
    MatrixX<T> pooled;  // 1 x D
    MatrixX<T> Timg;    // image-token head tiles, n_img x patch^2
};

namespace {

template <typename T>
void init_tensor(MatrixX<T>& m, std::uint64_t root_seed, const std::string& name, double stddev,
                 double constant = 0.0) {
    if (stddev == 0.0) {
        m.setConstant(static_cast<T>(constant));
        return;
    }
    Rng rng(seed_for(root_seed, "init/" + name));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = static_cast<T>(rng.normal(0.0, stddev));
        }
    }
}

} // namespace

template <typename T>
PolicyNet<T>::PolicyNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.embed_dim;
    const int g = cfg_.grid();

    auto weight = [&](const std::string& name, int rows, int cols, double stddev) {
        init_tensor(params_.add(name, rows, cols), seed, name, stddev);
    };
    auto constant = [&](const std::string& name, int rows, int cols, double value) {
        params_.add(name, rows, cols).setConstant(static_cast<T>(value));
    };

    weight("patch_embed.w", cfg_.patch_dim(), d, 0.02);
    constant("patch_embed.b", 1, d, 0.0);
    weight("pos_row", g, d, 0.02);
    weight("pos_col", g, d, 0.02);
    weight("depth_tokens", cfg_.n_depth_tokens, d, 0.02);

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        constant(p + "ln1.g", 1, d, 1.0);
        constant(p + "ln1.b", 1, d, 0.0);
        weight(p + "attn.wq", d, d, 0.02);
        constant(p + "attn.bq", 1, d, 0.0);
        weight(p + "attn.wk", d, d, 0.02);
        constant(p + "attn.bk", 1, d, 0.0);
        weight(p + "attn.wv", d, d, 0.02);
        constant(p + "attn.bv", 1, d, 0.0);
        weight(p + "attn.wo", d, d, 0.02);
        constant(p + "attn.bo", 1, d, 0.0);
        constant(p + "ln2.g", 1, d, 1.0);
        constant(p + "ln2.b", 1, d, 0.0);
        weight(p + "ff.w1", d, cfg_.hidden_dim, 0.02);
        constant(p + "ff.b1", 1, cfg_.hidden_dim, 0.0);
        weight(p + "ff.w2", cfg_.hidden_dim, d, 0.02);
        constant(p + "ff.b2", 1, d, 0.0);
    }

    constant("ln_f.g", 1, d, 1.0);
    constant("ln_f.b", 1, d, 0.0);

    weight("head.heatmap.w", d, cfg_.patch * cfg_.patch, 0.02);
    constant("head.heatmap.b", 1, cfg_.patch * cfg_.patch, 0.0);
    weight("head.depth.w", d, 1, 0.02);
    constant("head.depth.b", 1, 1, 0.0);
    weight("head.rot.w", d, 3 * cfg_.rot_bins_per_axis, 0.02);
    constant("head.rot.b", 1, 3 * cfg_.rot_bins_per_axis, 0.0);
    weight("head.open.w", d, 2, 0.02);
    constant("head.open.b", 1, 2, 0.0);
    weight("head.collision.w", d, 2, 0.02);
    constant("head.collision.b", 1, 2, 0.0);
    weight("head.refine.w", d, 2, 0.02);
    constant("head.refine.b", 1, 2, 0.0);
}

template <typename T>
MatrixX<T> PolicyNet<T>::extract_patches(const VirtualImage& img, const DepthRange& range,
                                         const ModelConfig& cfg) {
    if (img.resolution != cfg.image_size) {
        throw UsageError("tokenize: image resolution " + std::to_string(img.resolution) +
                         " does not match configured size " + std::to_string(cfg.image_size));
    }
    const int g = cfg.grid();
    const int p = cfg.patch;
    MatrixX<T> patches(cfg.n_image_tokens, cfg.patch_dim());
    const double inv_width = 1.0 / range.width();
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            const int token = r * g + c;
            for (int py = 0; py < p; ++py) {
                for (int px = 0; px < p; ++px) {
                    const int x = c * p + px;
                    const int y = r * p + py;
                    const std::uint8_t* rgb = img.rgb_at(x, y);
                    const float d = img.depth_at(x, y);
                    double dn = std::isfinite(d) ? (d - range.min) * inv_width : 1.0;
                    dn = std::clamp(dn, 0.0, 1.0);
                    const int base = (py * p + px) * 4;
                    patches(token, base + 0) = static_cast<T>(rgb[0] / 255.0);
                    patches(token, base + 1) = static_cast<T>(rgb[1] / 255.0);
                    patches(token, base + 2) = static_cast<T>(rgb[2] / 255.0);
                    patches(token, base + 3) = static_cast<T>(dn);
                }
            }
        }
    }
    return patches;
}

template <typename T>
PolicyOutputs PolicyNet<T>::forward(const VirtualImage& img, const DepthRange& range,
                                    const LanguageEncoding& lang) const {
    const MatrixX<T> patches = extract_patches(img, range, cfg_);
    return forward_tokens(patches, lang.tokens.cast<T>(), nullptr);
}

template <typename T>
PolicyOutputs PolicyNet<T>::forward_tokens(const MatrixX<T>& patches, const MatrixX<T>& lang_tokens,
                                           Activations* cache) const {
    const int d = cfg_.embed_dim;
    const int s = cfg_.total_tokens();
    const int n_img = cfg_.n_image_tokens;
    const int n_lang = cfg_.n_lang_tokens;
    const int n_depth = cfg_.n_depth_tokens;
    const int g = cfg_.grid();
    const int dh = d / cfg_.heads;
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));

    if (patches.rows() != n_img || patches.cols() != cfg_.patch_dim()) {
        throw UsageError("forward: patch matrix shape mismatch");
    }
    if (lang_tokens.rows() != n_lang || lang_tokens.cols() != d) {
        throw UsageError("forward: language token shape mismatch");
    }

    Activations local;
    Activations& acts = cache ? *cache : local;
    acts.layers.resize(cfg_.layers);

    MatrixX<T> x(s, d);
    x.topRows(n_img).noalias() = patches * params_.at("patch_embed.w");
    x.topRows(n_img).rowwise() += params_.at("patch_embed.b").row(0);
    const MatrixX<T>& pos_row = params_.at("pos_row");
    const MatrixX<T>& pos_col = params_.at("pos_col");
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            x.row(r * g + c) += pos_row.row(r) + pos_col.row(c);
        }
    }
    x.middleRows(n_img, n_lang) = lang_tokens;
    x.bottomRows(n_depth) = params_.at("depth_tokens");

    for (int l = 0; l < cfg_.layers; ++l) {
        auto& lc = acts.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        lc.x_in = x;

        layernorm_fwd(lc.x_in, params_.at(p + "ln1.g"), params_.at(p + "ln1.b"), lc.h1, lc.rstd1, lc.mean1);

        lc.Q.noalias() = lc.h1 * params_.at(p + "attn.wq");
        lc.Q.rowwise() += params_.at(p + "attn.bq").row(0);
        lc.K.noalias() = lc.h1 * params_.at(p + "attn.wk");
        lc.K.rowwise() += params_.at(p + "attn.bk").row(0);
        lc.V.noalias() = lc.h1 * params_.at(p + "attn.wv");
        lc.V.rowwise() += params_.at(p + "attn.bv").row(0);

        lc.A.resize(cfg_.heads);
        lc.O.resize(s, d);
        for (int h = 0; h < cfg_.heads; ++h) {
            auto qh = lc.Q.middleCols(h * dh, dh);
            auto kh = lc.K.middleCols(h * dh, dh);
            auto vh = lc.V.middleCols(h * dh, dh);
            MatrixX<T>& a = lc.A[h];
            a.noalias() = qh * kh.transpose();
            a *= inv_sqrt_dh;
            for (int i = 0; i < s; ++i) {
                const T m = a.row(i).maxCoeff();
                a.row(i) = (a.row(i).array() - m).exp().matrix();
                a.row(i) /= a.row(i).sum();
            }
            lc.O.middleCols(h * dh, dh).noalias() = a * vh;
        }

        MatrixX<T> attn_out;
        attn_out.noalias() = lc.O * params_.at(p + "attn.wo");
        attn_out.rowwise() += params_.at(p + "attn.bo").row(0);
        lc.x2 = lc.x_in + attn_out;

        layernorm_fwd(lc.x2, params_.at(p + "ln2.g"), params_.at(p + "ln2.b"), lc.h2, lc.rstd2, lc.mean2);
        lc.F1.noalias() = lc.h2 * params_.at(p + "ff.w1");
        lc.F1.rowwise() += params_.at(p + "ff.b1").row(0);
        lc.G = lc.F1.unaryExpr([](T v) { return gelu(v); });
        MatrixX<T> f2;
        f2.noalias() = lc.G * params_.at(p + "ff.w2");
        f2.rowwise() += params_.at(p + "ff.b2").row(0);
        x = lc.x2 + f2;
    }

    acts.x_final = x;
    layernorm_fwd(acts.x_final, params_.at("ln_f.g"), params_.at("ln_f.b"), acts.Y, acts.rstdf, acts.meanf);
    acts.pooled = acts.Y.colwise().mean();

    // Heads.
    const int tile = cfg_.patch * cfg_.patch;
    acts.Timg.noalias() = acts.Y.topRows(n_img) * params_.at("head.heatmap.w");
    acts.Timg.rowwise() += params_.at("head.heatmap.b").row(0);

    PolicyOutputs out;
    out.resolution = cfg_.image_size;
    out.heatmap_logits.resize(static_cast<size_t>(cfg_.image_size) * cfg_.image_size);
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            const int token = r * g + c;
            for (int py = 0; py < cfg_.patch; ++py) {
                for (int px = 0; px < cfg_.patch; ++px) {
                    const size_t pixel =
                        static_cast<size_t>(r * cfg_.patch + py) * cfg_.image_size + (c * cfg_.patch + px);
                    out.heatmap_logits[pixel] = static_cast<double>(acts.Timg(token, py * cfg_.patch + px));
                }
            }
        }
    }
    (void)tile;

    out.depth_logits.resize(n_depth);
    const MatrixX<T>& wd = params_.at("head.depth.w");
    const T bd = params_.at("head.depth.b")(0, 0);
    for (int k = 0; k < n_depth; ++k) {
        out.depth_logits[k] = static_cast<double>((acts.Y.row(n_img + n_lang + k) * wd)(0, 0) + bd);
    }

    MatrixX<T> rot = acts.pooled * params_.at("head.rot.w");
    rot += params_.at("head.rot.b");
    for (int axis = 0; axis < 3; ++axis) {
        out.rot_logits[axis].resize(cfg_.rot_bins_per_axis);
        for (int b = 0; b < cfg_.rot_bins_per_axis; ++b) {
            out.rot_logits[axis][b] = static_cast<double>(rot(0, axis * cfg_.rot_bins_per_axis + b));
        }
    }

    auto two_way = [&](const char* w, const char* b) {
        MatrixX<T> v = acts.pooled * params_.at(w);
        v += params_.at(b);
        return std::array<double, 2>{static_cast<double>(v(0, 0)), static_cast<double>(v(0, 1))};
    };
    out.open_logits = two_way("head.open.w", "head.open.b");
    out.collision_logits = two_way("head.collision.w", "head.collision.b");
    out.refine_logits = two_way("head.refine.w", "head.refine.b");
    return out;
}

LossBreakdown loss(const PolicyOutputs& outputs, const EncodedActionTarget& target) {
    if (outputs.resolution != target.resolution) {
        throw UsageError("loss: outputs and target resolutions disagree");
    }
    if (outputs.heatmap_logits.size() != target.heatmap.size()) {
        throw UsageError("loss: heatmap sizes disagree");
    }
    LossBreakdown out;
    out.trans = xent_distribution<double>(outputs.heatmap_logits.data(), target.heatmap.data(),
                                          static_cast<int>(target.heatmap.size()), nullptr);
    out.depth = xent_onehot<double>(outputs.depth_logits.data(), target.depth_bin,
                                    static_cast<int>(outputs.depth_logits.size()), nullptr);
    for (int axis = 0; axis < 3; ++axis) {
        out.rot_axes[axis] =
            xent_onehot<double>(outputs.rot_logits[axis].data(), target.rot_bins[axis],
                                static_cast<int>(outputs.rot_logits[axis].size()), nullptr);
        out.rot += out.rot_axes[axis];
    }
    out.open = xent_onehot<double>(outputs.open_logits.data(), target.open_bit ? 1 : 0, 2, nullptr);
    out.collision =
        xent_onehot<double>(outputs.collision_logits.data(), target.collision_bit ? 1 : 0, 2, nullptr);
    out.dyn_inf = xent_onehot<double>(outputs.refine_logits.data(), target.refine_label ? 1 : 0, 2, nullptr);
    return out;
}

template <typename T>
LossBreakdown PolicyNet<T>::loss_and_grad(const MatrixX<T>& patches, const MatrixX<T>& lang_tokens,
                                          const EncodedActionTarget& target, ParamSet<T>& grads) const {
    if (target.resolution != cfg_.image_size) {
        throw UsageError("loss_and_grad: target resolution disagrees with model");
    }
    Activations acts;
    const PolicyOutputs outputs = forward_tokens(patches, lang_tokens, &acts);

    const int d = cfg_.embed_dim;
    const int s = cfg_.total_tokens();
    const int n_img = cfg_.n_image_tokens;
    const int n_lang = cfg_.n_lang_tokens;
    const int n_depth = cfg_.n_depth_tokens;
    const int g = cfg_.grid();
    const int dh = d / cfg_.heads;
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
    const int res = cfg_.image_size;

    // Loss and logit gradients.
    LossBreakdown breakdown;
    std::vector<T> heat_logits(outputs.heatmap_logits.size());
    for (size_t i = 0; i < heat_logits.size(); ++i) heat_logits[i] = static_cast<T>(outputs.heatmap_logits[i]);
    std::vector<T> dheat(heat_logits.size());
    breakdown.trans = xent_distribution<T>(heat_logits.data(), target.heatmap.data(),
                                           static_cast<int>(heat_logits.size()), dheat.data());

    std::vector<T> depth_logits(n_depth);
    for (int i = 0; i < n_depth; ++i) depth_logits[i] = static_cast<T>(outputs.depth_logits[i]);
    std::vector<T> ddepth(n_depth);
    breakdown.depth = xent_onehot<T>(depth_logits.data(), target.depth_bin, n_depth, ddepth.data());

    const int rbins = cfg_.rot_bins_per_axis;
    std::vector<T> drot(3 * static_cast<size_t>(rbins));
    for (int axis = 0; axis < 3; ++axis) {
        std::vector<T> rl(rbins);
        for (int b = 0; b < rbins; ++b) rl[b] = static_cast<T>(outputs.rot_logits[axis][b]);
        breakdown.rot_axes[axis] =
            xent_onehot<T>(rl.data(), target.rot_bins[axis], rbins, drot.data() + axis * rbins);
        breakdown.rot += breakdown.rot_axes[axis];
    }

    std::array<T, 2> open_l{static_cast<T>(outputs.open_logits[0]), static_cast<T>(outputs.open_logits[1])};
    std::array<T, 2> coll_l{static_cast<T>(outputs.collision_logits[0]),
                            static_cast<T>(outputs.collision_logits[1])};
    std::array<T, 2> ref_l{static_cast<T>(outputs.refine_logits[0]), static_cast<T>(outputs.refine_logits[1])};
    std::array<T, 2> dopen{}, dcoll{}, dref{};
    breakdown.open = xent_onehot<T>(open_l.data(), target.open_bit ? 1 : 0, 2, dopen.data());
    breakdown.collision = xent_onehot<T>(coll_l.data(), target.collision_bit ? 1 : 0, 2, dcoll.data());
    breakdown.dyn_inf = xent_onehot<T>(ref_l.data(), target.refine_label ? 1 : 0, 2, dref.data());

    // --- Backward through heads into dY.
    MatrixX<T> dY = MatrixX<T>::Zero(s, d);

    // Heatmap head: gather pixel grads back into per-token tiles.
    MatrixX<T> dTimg(n_img, cfg_.patch * cfg_.patch);
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            const int token = r * g + c;
            for (int py = 0; py < cfg_.patch; ++py) {
                for (int px = 0; px < cfg_.patch; ++px) {
                    const size_t pixel =
                        static_cast<size_t>(r * cfg_.patch + py) * res + (c * cfg_.patch + px);
                    dTimg(token, py * cfg_.patch + px) = dheat[pixel];
                }
            }
        }
    }
    grads.at("head.heatmap.w").noalias() += acts.Y.topRows(n_img).transpose() * dTimg;
    grads.at("head.heatmap.b").row(0) += dTimg.colwise().sum();
    dY.topRows(n_img).noalias() += dTimg * params_.at("head.heatmap.w").transpose();

    // Depth head.
    {
        const MatrixX<T>& wd = params_.at("head.depth.w");
        for (int k = 0; k < n_depth; ++k) {
            const int row = n_img + n_lang + k;
            grads.at("head.depth.w").noalias() += acts.Y.row(row).transpose() * ddepth[k];
            grads.at("head.depth.b")(0, 0) += ddepth[k];
            dY.row(row) += ddepth[k] * wd.transpose();
        }
    }

    // Pooled heads.
    MatrixX<T> dpooled = MatrixX<T>::Zero(1, d);
    {
        MatrixX<T> drot_m(1, 3 * rbins);
        for (int i = 0; i < 3 * rbins; ++i) drot_m(0, i) = drot[i];
        grads.at("head.rot.w").noalias() += acts.pooled.transpose() * drot_m;
        grads.at("head.rot.b") += drot_m;
        dpooled.noalias() += drot_m * params_.at("head.rot.w").transpose();

        auto two_way_bwd = [&](const char* w, const char* b, const std::array<T, 2>& dl) {
            MatrixX<T> dm(1, 2);
            dm(0, 0) = dl[0];
            dm(0, 1) = dl[1];
            grads.at(w).noalias() += acts.pooled.transpose() * dm;
            grads.at(b) += dm;
            dpooled.noalias() += dm * params_.at(w).transpose();
        };
        two_way_bwd("head.open.w", "head.open.b", dopen);
        two_way_bwd("head.collision.w", "head.collision.b", dcoll);
        two_way_bwd("head.refine.w", "head.refine.b", dref);
    }
    dY.rowwise() += (dpooled / static_cast<T>(s)).row(0);

    // Final layernorm.
    MatrixX<T> dx = MatrixX<T>::Zero(s, d);
    layernorm_bwd(dY, acts.x_final, params_.at("ln_f.g"), acts.rstdf, acts.meanf, dx,
                  grads.at("ln_f.g"), grads.at("ln_f.b"));

    // Layers in reverse.
    for (int l = cfg_.layers - 1; l >= 0; --l) {
        const auto& lc = acts.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";

        // FF block: x_out = x2 + G * W2 + b2.
        MatrixX<T>& dxout = dx;
        grads.at(p + "ff.w2").noalias() += lc.G.transpose() * dxout;
        grads.at(p + "ff.b2").row(0) += dxout.colwise().sum();
        MatrixX<T> dG;
        dG.noalias() = dxout * params_.at(p + "ff.w2").transpose();
        MatrixX<T> dF1 = dG.binaryExpr(lc.F1, [](T gval, T f1) { return gval * gelu_grad(f1); });
        grads.at(p + "ff.w1").noalias() += lc.h2.transpose() * dF1;
        grads.at(p + "ff.b1").row(0) += dF1.colwise().sum();
        MatrixX<T> dh2;
        dh2.noalias() = dF1 * params_.at(p + "ff.w1").transpose();

        MatrixX<T> dx2 = dxout;  // residual branch
        layernorm_bwd(dh2, lc.x2, params_.at(p + "ln2.g"), lc.rstd2, lc.mean2, dx2,
                      grads.at(p + "ln2.g"), grads.at(p + "ln2.b"));

        // Attention block: x2 = x_in + O * Wo + bo.
        grads.at(p + "attn.wo").noalias() += lc.O.transpose() * dx2;
        grads.at(p + "attn.bo").row(0) += dx2.colwise().sum();
        MatrixX<T> dO;
        dO.noalias() = dx2 * params_.at(p + "attn.wo").transpose();

        MatrixX<T> dQ = MatrixX<T>::Zero(s, d);
        MatrixX<T> dK = MatrixX<T>::Zero(s, d);
        MatrixX<T> dV = MatrixX<T>::Zero(s, d);
        for (int h = 0; h < cfg_.heads; ++h) {
            auto qh = lc.Q.middleCols(h * dh, dh);
            auto kh = lc.K.middleCols(h * dh, dh);
            auto vh = lc.V.middleCols(h * dh, dh);
            auto dOh = dO.middleCols(h * dh, dh);
            const MatrixX<T>& a = lc.A[h];

            MatrixX<T> dA;
            dA.noalias() = dOh * vh.transpose();
            dV.middleCols(h * dh, dh).noalias() = a.transpose() * dOh;

            // softmax rows backward
            MatrixX<T> dS(s, s);
            for (int i = 0; i < s; ++i) {
                const T dot = a.row(i).dot(dA.row(i));
                dS.row(i) = (a.row(i).array() * (dA.row(i).array() - dot)).matrix();
            }
            dQ.middleCols(h * dh, dh).noalias() = dS * kh * inv_sqrt_dh;
            dK.middleCols(h * dh, dh).noalias() = dS.transpose() * qh * inv_sqrt_dh;
        }

        grads.at(p + "attn.wq").noalias() += lc.h1.transpose() * dQ;
        grads.at(p + "attn.bq").row(0) += dQ.colwise().sum();
        grads.at(p + "attn.wk").noalias() += lc.h1.transpose() * dK;
        grads.at(p + "attn.bk").row(0) += dK.colwise().sum();
        grads.at(p + "attn.wv").noalias() += lc.h1.transpose() * dV;
        grads.at(p + "attn.bv").row(0) += dV.colwise().sum();

        MatrixX<T> dh1;
        dh1.noalias() = dQ * params_.at(p + "attn.wq").transpose();
        dh1.noalias() += dK * params_.at(p + "attn.wk").transpose();
        dh1.noalias() += dV * params_.at(p + "attn.wv").transpose();

        MatrixX<T> dx_in = dx2;  // residual branch
        layernorm_bwd(dh1, lc.x_in, params_.at(p + "ln1.g"), lc.rstd1, lc.mean1, dx_in,
                      grads.at(p + "ln1.g"), grads.at(p + "ln1.b"));
        dx = std::move(dx_in);
    }

    // Token assembly backward.
    grads.at("patch_embed.w").noalias() += patches.transpose() * dx.topRows(n_img);
    grads.at("patch_embed.b").row(0) += dx.topRows(n_img).colwise().sum();
    for (int r = 0; r < g; ++r) {
        for (int c = 0; c < g; ++c) {
            grads.at("pos_row").row(r) += dx.row(r * g + c);
            grads.at("pos_col").row(c) += dx.row(r * g + c);
        }
    }
    grads.at("depth_tokens") += dx.bottomRows(n_depth);
    // Language tokens are inputs, not parameters; their gradient is dropped.

    return breakdown;
}

// ---------------------------------------------------------------------------
// Checkpoints: "VEPT" magic, u32 version, u32 manifest length, manifest JSON,
// then the tensor data as little-endian f32 in manifest order.

namespace {

constexpr char kCheckpointMagic[4] = {'V', 'E', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {{"image_size", cfg.image_size},   {"patch", cfg.patch},
            {"n_image_tokens", cfg.n_image_tokens}, {"n_lang_tokens", cfg.n_lang_tokens},
            {"n_depth_tokens", cfg.n_depth_tokens}, {"layers", cfg.layers},
            {"embed_dim", cfg.embed_dim},     {"heads", cfg.heads},
            {"hidden_dim", cfg.hidden_dim},   {"rot_bins_per_axis", cfg.rot_bins_per_axis}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.image_size = j.at("image_size").get<int>();
    cfg.patch = j.at("patch").get<int>();
    cfg.n_image_tokens = j.at("n_image_tokens").get<int>();
    cfg.n_lang_tokens = j.at("n_lang_tokens").get<int>();
    cfg.n_depth_tokens = j.at("n_depth_tokens").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.embed_dim = j.at("embed_dim").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.hidden_dim = j.at("hidden_dim").get<int>();
    cfg.rot_bins_per_axis = j.at("rot_bins_per_axis").get<int>();
    return cfg;
}

} // namespace

template <typename T>
void PolicyNet<T>::save_checkpoint(const std::string& path) const {
    nlohmann::json manifest;
    manifest["config"] = config_to_json(cfg_);
    manifest["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& e : params_.entries()) {
        manifest["tensors"].push_back({{"name", e.name},
                                       {"shape", {e.value.rows(), e.value.cols()}},
                                       {"offset", offset}});
        offset += static_cast<std::uint64_t>(e.value.size()) * 4;
    }
    const std::string manifest_text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("checkpoint: cannot write " + path);
    }
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint32_t mlen = static_cast<std::uint32_t>(manifest_text.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&mlen), 4);
    out.write(manifest_text.data(), mlen);
    for (const auto& e : params_.entries()) {
        for (Eigen::Index i = 0; i < e.value.rows(); ++i) {
            for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
                const float v = static_cast<float>(e.value(i, j));
                out.write(reinterpret_cast<const char*>(&v), 4);
            }
        }
    }
    if (!out) {
        throw UsageError("checkpoint: short write to " + path);
    }
}

template <typename T>
PolicyNet<T> PolicyNet<T>::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("checkpoint: cannot open " + path);
    }
    char magic[4];
    std::uint32_t version = 0;
    std::uint32_t mlen = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&mlen), 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw CorruptDataError("checkpoint: bad magic");
    }
    if (version != kCheckpointVersion) {
        throw CorruptDataError("checkpoint: unsupported version");
    }
    std::string manifest_text(mlen, '\0');
    in.read(manifest_text.data(), mlen);
    if (!in) {
        throw CorruptDataError("checkpoint: truncated manifest");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptDataError(std::string("checkpoint: bad manifest: ") + e.what());
    }

    PolicyNet<T> net(config_from_json(manifest.at("config")), 0);
    for (const auto& t : manifest.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        const int rows = t.at("shape").at(0).get<int>();
        const int cols = t.at("shape").at(1).get<int>();
        MatrixX<T>& dst = net.params_.at(name);
        if (dst.rows() != rows || dst.cols() != cols) {
            throw CorruptDataError("checkpoint: tensor " + name + " has unexpected shape");
        }
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                float v = 0.0f;
                in.read(reinterpret_cast<char*>(&v), 4);
                dst(i, j) = static_cast<T>(v);
            }
        }
    }
    if (!in) {
        throw CorruptDataError("checkpoint: truncated tensor data");
    }
    return net;
}

template class ParamSet<float>;
template class ParamSet<double>;
template class PolicyNet<float>;
template class PolicyNet<double>;

} // namespace veye
