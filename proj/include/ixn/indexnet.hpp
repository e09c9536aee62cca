#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ixn/ops.hpp"
#include "ixn/random.hpp"

namespace ixn {

// The five learnable index-network families. Each maps an encoder feature
// map (N, C, H, W) to raw index logits, which are then normalized into an
// encoder map (convex weights per k x k window under the default scheme) and
// a decoder map (sigmoid range).
enum class Family {
    HIN,                    // holistic: one index channel for all features
    O2O_Modelwise,          // depthwise, one net shared by the whole model
    O2O_SharedStagewise,    // depthwise, one net per stage shared over channels
    O2O_UnsharedStagewise,  // depthwise, per-channel kernels (group conv)
    M2O,                    // depthwise output, full-channel input (std conv)
};

enum class Normalization {
    SigmoidSigmoid,        // enc sigmoid            | dec sigmoid
    SoftmaxSoftmax,        // enc softmax            | dec softmax
    SoftmaxSigmoidEnc,     // enc sigmoid(softmax)   | dec softmax
    SigmoidSoftmaxEnc,     // enc softmax(sigmoid)   | dec sigmoid  (default)
};

struct IndexNetConfig {
    Family family = Family::M2O;
    bool nonlinear = false;
    bool context = false;  // first kernel 2k x 2k with padding k/2
    int k = 2;             // region size / downsampling rate
    int channels = 0;      // feature channels (unused by Modelwise/Shared)
    Normalization normalization = Normalization::SigmoidSoftmaxEnc;
};

inline bool family_is_din(Family f) { return f != Family::HIN; }
inline bool family_channel_agnostic(Family f) {
    return f == Family::O2O_Modelwise || f == Family::O2O_SharedStagewise;
}

inline const char* family_name(Family f) {
    switch (f) {
        case Family::HIN: return "hin";
        case Family::O2O_Modelwise: return "o2o_modelwise";
        case Family::O2O_SharedStagewise: return "o2o_shared_stagewise";
        case Family::O2O_UnsharedStagewise: return "o2o_unshared_stagewise";
        case Family::M2O: return "m2o";
    }
    return "?";
}

inline std::string variant_name(const IndexNetConfig& cfg) {
    if (!cfg.nonlinear && !cfg.context) return "linear";
    if (cfg.nonlinear && !cfg.context) return "nl";
    if (cfg.nonlinear && cfg.context) return "nl_c";
    return "linear_c";
}

inline std::optional<Family> family_from_name(const std::string& s) {
    for (Family f : {Family::HIN, Family::O2O_Modelwise, Family::O2O_SharedStagewise,
                     Family::O2O_UnsharedStagewise, Family::M2O})
        if (s == family_name(f)) return f;
    return std::nullopt;
}

/// Applies a variant suffix ("linear", "nl", "nl_c") to a config.
inline bool apply_variant(IndexNetConfig& cfg, const std::string& variant) {
    if (variant == "linear") {
        cfg.nonlinear = false;
        cfg.context = false;
    } else if (variant == "nl") {
        cfg.nonlinear = true;
        cfg.context = false;
    } else if (variant == "nl_c") {
        cfg.nonlinear = true;
        cfg.context = true;
    } else {
        return false;
    }
    return true;
}

/// Parses a combined "family_variant" label such as "m2o_nl_c" or
/// "o2o_modelwise_linear".
inline std::optional<IndexNetConfig> indexnet_config_from_label(const std::string& label) {
    for (const char* suffix : {"_linear", "_nl_c", "_nl"}) {
        const std::string sfx = suffix;
        if (label.size() > sfx.size() &&
            label.compare(label.size() - sfx.size(), sfx.size(), sfx) == 0) {
            const auto fam = family_from_name(label.substr(0, label.size() - sfx.size()));
            if (!fam) return std::nullopt;
            IndexNetConfig cfg;
            cfg.family = *fam;
            apply_variant(cfg, sfx.substr(1));
            return cfg;
        }
    }
    return std::nullopt;
}

inline const char* normalization_name(Normalization n) {
    switch (n) {
        case Normalization::SigmoidSigmoid: return "sigmoid_sigmoid";
        case Normalization::SoftmaxSoftmax: return "softmax_softmax";
        case Normalization::SoftmaxSigmoidEnc: return "softmax_sigmoid_enc";
        case Normalization::SigmoidSoftmaxEnc: return "sigmoid_softmax_enc";
    }
    return "?";
}

inline std::optional<Normalization> normalization_from_name(const std::string& s) {
    for (Normalization n : {Normalization::SigmoidSigmoid, Normalization::SoftmaxSoftmax,
                            Normalization::SoftmaxSigmoidEnc, Normalization::SigmoidSoftmaxEnc})
        if (s == normalization_name(n)) return n;
    return std::nullopt;
}

/// Paired index maps from one IndexNet forward pass, both at the full
/// pre-downsampling resolution. C_idx = 1 for HIN, = C for DINs.
template <typename T>
struct IndexMaps {
    Var<T> encoder_index;
    Var<T> decoder_index;
};

/// Conv weights only; BN affine parameters and final-layer biases are
/// excluded, matching the published complexity formulas. The Unshared
/// nonlinear variants use the grouped (one-to-one consistent) second layer,
/// so their second term is 2C rather than 2C*C.
inline std::int64_t indexnet_param_count(const IndexNetConfig& cfg) {
    const std::int64_t k2 = static_cast<std::int64_t>(cfg.k) * cfg.k;
    const std::int64_t kk = cfg.context ? 4 * k2 : k2;  // first-kernel area
    const std::int64_t c = cfg.channels;
    switch (cfg.family) {
        case Family::HIN:
            return cfg.nonlinear ? kk * c * 2 * c + 2 * c * k2 : kk * c * k2;
        case Family::O2O_Modelwise:
        case Family::O2O_SharedStagewise:
            return (cfg.nonlinear ? kk * 2 + 2 : kk) * k2;
        case Family::O2O_UnsharedStagewise:
            return (cfg.nonlinear ? kk * 2 * c + 2 * c : kk * c) * k2;
        case Family::M2O:
            return (cfg.nonlinear ? kk * c * 2 * c + 2 * c * c : kk * c * c) * k2;
    }
    return 0;
}

/// Human-readable formula string for the matching complexity-table row.
inline std::string indexnet_param_formula(const IndexNetConfig& cfg) {
    const std::string kk = cfg.context ? "2Kx2K" : "KxK";
    switch (cfg.family) {
        case Family::HIN:
            return cfg.nonlinear ? kk + "xCx2C+2Cx4" : kk + "xCx4";
        case Family::O2O_Modelwise:
        case Family::O2O_SharedStagewise:
            return cfg.nonlinear ? "(" + kk + "x2+2)x4" : "(" + kk + ")x4";
        case Family::O2O_UnsharedStagewise:
            // grouped second layer; the published table lists (KxKx2C+2CxC)x4
            return cfg.nonlinear ? "(" + kk + "x2C+2C)x4 [grouped]" : "(" + kk + "xC)x4";
        case Family::M2O:
            return cfg.nonlinear ? "(" + kk + "xCx2C+2CxC)x4" : "(" + kk + "xCxC)x4";
    }
    return "?";
}

/// One IndexNet instance: the convolutional index block plus normalization.
/// DIN variants hold k^2 independent columns, one per window offset.
template <typename T>
class IndexNet {
public:
    IndexNet() = default;

    IndexNet(const IndexNetConfig& cfg, Rng& rng, const std::string& name)
        : cfg_(cfg), name_(name) {
        validate(cfg);
        const int k = cfg.k;
        const int kk = first_kernel();
        if (cfg.family == Family::HIN) {
            const int c = cfg.channels;
            if (cfg.nonlinear) {
                conv1_.push_back(make_weight(Shape{2 * c, c, kk, kk}, rng, "conv1"));
                bn_.emplace_back(name_ + ".bn", 2 * c);
                conv2_.push_back(make_weight(Shape{k * k, 2 * c, 1, 1}, rng, "conv2"));
                bias_.push_back(make_bias(k * k, "bias"));
            } else {
                conv1_.push_back(make_weight(Shape{k * k, c, kk, kk}, rng, "conv1"));
                bias_.push_back(make_bias(k * k, "bias"));
            }
        } else {
            // k^2 columns, parameters not shared between columns
            for (int j = 0; j < k * k; ++j) {
                const std::string col = "col" + std::to_string(j);
                const auto [cin, mid, cout, groups] = column_dims();
                if (cfg.nonlinear) {
                    conv1_.push_back(make_weight(Shape{mid, cin / groups, kk, kk}, rng,
                                                 col + ".conv1"));
                    bn_.emplace_back(name_ + "." + col + ".bn", mid);
                    conv2_.push_back(make_weight(Shape{cout, mid / groups, 1, 1}, rng,
                                                 col + ".conv2"));
                } else {
                    conv1_.push_back(make_weight(Shape{cout, cin / groups, kk, kk}, rng,
                                                 col + ".conv1"));
                }
                bias_.push_back(make_bias(cout, col + ".bias"));
            }
        }
    }

    const IndexNetConfig& config() const { return cfg_; }
    const std::string& name() const { return name_; }

    /// Raw index logits: (N, 1, H, W) for HIN, (N, C, H, W) for DINs.
    Var<T> forward_logits(const Var<T>& x, bool training) {
        const Shape xs = x.shape();
        const int k = cfg_.k;
        if (xs.h % k != 0 || xs.w % k != 0)
            throw DimensionError("indexnet: spatial size " + std::to_string(xs.h) + "x" +
                                 std::to_string(xs.w) + " not divisible by k=" +
                                 std::to_string(k));
        if (!family_channel_agnostic(cfg_.family) && xs.c != cfg_.channels)
            throw DimensionError("indexnet: configured for " +
                                 std::to_string(cfg_.channels) + " channels, input has " +
                                 std::to_string(xs.c));
        const int pad = cfg_.context ? k / 2 : 0;

        if (cfg_.family == Family::HIN) {
            Var<T> h;
            if (cfg_.nonlinear) {
                h = conv2d(x, conv1_[0].var, k, pad);
                h = bn_[0].forward(h, training);
                h = relu(h);
                h = conv2d(h, conv2_[0].var, 1, 0);
            } else {
                h = conv2d(x, conv1_[0].var, k, pad);
            }
            h = add_bias(h, bias_[0].var);
            return depth_to_space(h, k);  // (N, 1, H, W)
        }

        // DIN path. Modelwise/Shared apply 1-channel kernels to every feature
        // slice via the channel-to-batch reshape.
        const bool per_slice = family_channel_agnostic(cfg_.family);
        Var<T> in = x;
        if (per_slice)
            in = reshape(x, Shape{xs.n * xs.c, 1, xs.h, xs.w});
        const int groups = cfg_.family == Family::O2O_UnsharedStagewise ? xs.c : 1;

        std::vector<Var<T>> cols;
        cols.reserve(static_cast<std::size_t>(k) * k);
        for (int j = 0; j < k * k; ++j) {
            Var<T> h;
            if (cfg_.nonlinear) {
                h = conv2d(in, conv1_[static_cast<std::size_t>(j)].var, k, pad, groups);
                h = bn_[static_cast<std::size_t>(j)].forward(h, training);
                h = relu(h);
                h = conv2d(h, conv2_[static_cast<std::size_t>(j)].var, 1, 0, groups);
            } else {
                h = conv2d(in, conv1_[static_cast<std::size_t>(j)].var, k, pad, groups);
            }
            h = add_bias(h, bias_[static_cast<std::size_t>(j)].var);
            if (per_slice)
                h = reshape(h, Shape{xs.n, xs.c, xs.h / k, xs.w / k});
            cols.push_back(h);
        }
        return interleave_windows(cols, k);  // (N, C, H, W)
    }

    /// Logits plus the two normalization paths of the configured scheme.
    IndexMaps<T> forward(const Var<T>& x, bool training) {
        return normalize_index(forward_logits(x, training), cfg_);
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        for (auto& p : conv1_) out.push_back(&p);
        for (auto& p : conv2_) out.push_back(&p);
        for (auto& p : bias_) out.push_back(&p);
        for (auto& b : bn_) {
            out.push_back(&b.gamma);
            out.push_back(&b.beta);
        }
        return out;
    }

    std::int64_t param_count() const { return indexnet_param_count(cfg_); }

    /// Normalization layers (for persisting their running statistics).
    std::vector<BatchNorm2d<T>*> batch_norms() {
        std::vector<BatchNorm2d<T>*> out;
        for (auto& b : bn_) out.push_back(&b);
        return out;
    }

private:
    int first_kernel() const { return cfg_.context ? 2 * cfg_.k : cfg_.k; }

    // (cin, mid, cout, groups) of one DIN column for the full (unreshaped)
    // channel count seen by the convolution.
    std::tuple<int, int, int, int> column_dims() const {
        const int c = cfg_.channels;
        switch (cfg_.family) {
            case Family::O2O_Modelwise:
            case Family::O2O_SharedStagewise:
                return {1, 2, 1, 1};
            case Family::O2O_UnsharedStagewise:
                return {c, 2 * c, c, c};
            case Family::M2O:
                return {c, 2 * c, c, 1};
            default:
                throw ContractError("column_dims on HIN");
        }
    }

    static void validate(const IndexNetConfig& cfg) {
        if (cfg.k < 1) throw ConfigError("indexnet: k must be >= 1");
        if (cfg.context && cfg.k % 2 != 0)
            throw ConfigError("indexnet: context variant needs even k for padding k/2");
        if (!family_channel_agnostic(cfg.family) && cfg.channels < 1)
            throw ConfigError(std::string("indexnet: family ") + family_name(cfg.family) +
                              " requires a channel count");
    }

    Parameter<T> make_weight(Shape s, Rng& rng, const std::string& suffix) {
        return Parameter<T>(name_ + "." + suffix, he_normal<T>(s, rng));
    }
    Parameter<T> make_bias(int c, const std::string& suffix) {
        return Parameter<T>(name_ + "." + suffix, Tensor<T>(Shape{1, c, 1, 1}, T(0)));
    }

    IndexNetConfig cfg_{};
    std::string name_;
    std::vector<Parameter<T>> conv1_, conv2_, bias_;
    std::vector<BatchNorm2d<T>> bn_;
};

/// Applies the configured normalization scheme to raw logits.
template <typename T>
IndexMaps<T> normalize_index(const Var<T>& logits, const IndexNetConfig& cfg) {
    switch (cfg.normalization) {
        case Normalization::SigmoidSoftmaxEnc: {
            Var<T> sig = sigmoid(logits);
            return {region_softmax(sig, cfg.k), sig};
        }
        case Normalization::SigmoidSigmoid: {
            Var<T> sig = sigmoid(logits);
            return {sig, sig};
        }
        case Normalization::SoftmaxSoftmax: {
            Var<T> soft = region_softmax(logits, cfg.k);
            return {soft, soft};
        }
        case Normalization::SoftmaxSigmoidEnc: {
            Var<T> soft = region_softmax(logits, cfg.k);
            return {sigmoid(soft), soft};
        }
    }
    throw ContractError("normalize_index: unknown normalization");
}

/// Per-stage IndexNet instances honoring the family's sharing scope:
/// Modelwise holds one parameter set for all stages, every other family one
/// per stage.
template <typename T>
class StageRegistry {
public:
    StageRegistry() = default;

    static StageRegistry create(IndexNetConfig cfg, const std::vector<int>& stage_channels,
                                Rng& rng, const std::string& name_prefix = "indexnet") {
        StageRegistry reg;
        reg.cfg_ = cfg;
        if (cfg.family == Family::O2O_Modelwise) {
            auto shared = std::make_shared<IndexNet<T>>(cfg, rng, name_prefix + ".shared");
            for (std::size_t i = 0; i < stage_channels.size(); ++i)
                reg.stages_.push_back(shared);
        } else {
            for (std::size_t i = 0; i < stage_channels.size(); ++i) {
                IndexNetConfig c = cfg;
                if (!family_channel_agnostic(cfg.family)) c.channels = stage_channels[i];
                reg.stages_.push_back(std::make_shared<IndexNet<T>>(
                    c, rng, name_prefix + ".s" + std::to_string(i)));
            }
        }
        return reg;
    }

    std::size_t size() const { return stages_.size(); }
    IndexNet<T>& stage(std::size_t i) { return *stages_.at(i); }
    std::shared_ptr<IndexNet<T>> stage_ptr(std::size_t i) { return stages_.at(i); }

    /// Distinct parameter sets (shared instances deduplicated).
    std::size_t distinct_instances() const {
        std::vector<const void*> seen;
        for (const auto& s : stages_)
            if (std::find(seen.begin(), seen.end(), s.get()) == seen.end())
                seen.push_back(s.get());
        return seen.size();
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        std::vector<const void*> seen;
        for (auto& s : stages_) {
            if (std::find(seen.begin(), seen.end(), s.get()) != seen.end()) continue;
            seen.push_back(s.get());
            for (auto* p : s->parameters()) out.push_back(p);
        }
        return out;
    }

private:
    IndexNetConfig cfg_{};
    std::vector<std::shared_ptr<IndexNet<T>>> stages_;
};

}  // namespace ixn
