#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ixn/guided.hpp"
#include "ixn/indexnet.hpp"
#include "ixn/ops.hpp"
#include "ixn/random.hpp"

namespace ixn {

// Down/up pairings: the classical baselines plus the index-guided pair and
// the guided-down/blind-up ablation. All pairs use factor 2.
enum class PairId {
    AvgPoolNN,
    ConvBilinear,
    S2D_D2S,
    ConvDeconv,
    MaxPoolUnpool,
    IP_IU,
    IP_Bilinear,  // ablation: guided pooling, blind upsampling
};

inline const char* pair_name(PairId id) {
    switch (id) {
        case PairId::AvgPoolNN: return "avgpool_nn";
        case PairId::ConvBilinear: return "conv_bilinear";
        case PairId::S2D_D2S: return "s2d_d2s";
        case PairId::ConvDeconv: return "conv_deconv";
        case PairId::MaxPoolUnpool: return "maxpool_unpool";
        case PairId::IP_IU: return "ip_iu";
        case PairId::IP_Bilinear: return "ip_bilinear";
    }
    return "?";
}

inline std::optional<PairId> pair_from_name(const std::string& s) {
    for (PairId id : {PairId::AvgPoolNN, PairId::ConvBilinear, PairId::S2D_D2S,
                      PairId::ConvDeconv, PairId::MaxPoolUnpool, PairId::IP_IU,
                      PairId::IP_Bilinear})
        if (s == pair_name(id)) return id;
    return std::nullopt;
}

/// True iff the upsampler consumes stage-local side information captured at
/// downsampling time.
inline bool pair_carries_side_info(PairId id) {
    return id == PairId::MaxPoolUnpool || id == PairId::IP_IU;
}

inline bool pair_needs_indexnet(PairId id) {
    return id == PairId::IP_IU || id == PairId::IP_Bilinear;
}

struct SamplerPair {
    PairId id;
    bool carries_side_info;
    const char* name;
};

inline SamplerPair build_pair(PairId id) {
    return {id, pair_carries_side_info(id), pair_name(id)};
}

/// One concrete downsample/upsample stage instance. Side information, when
/// any, lives in the stage object between down() and up() of a single
/// forward pass.
template <typename T>
class SamplerStage {
public:
    virtual ~SamplerStage() = default;
    virtual Var<T> down(const Var<T>& x) = 0;
    virtual Var<T> up(const Var<T>& d) = 0;
    virtual std::vector<Parameter<T>*> parameters() { return {}; }
    /// Channel multiplier applied by down() (1 except space-to-depth).
    virtual int down_channel_factor() const { return 1; }
    /// Exchanges stored side information with another stage; used by tests
    /// to verify that blind pairs ignore it. No-op for blind stages.
    virtual void swap_side_info(SamplerStage&) {}
};

template <typename T>
class AvgPoolNNStage final : public SamplerStage<T> {
public:
    Var<T> down(const Var<T>& x) override { return avg_pool(x, 2, 2); }
    Var<T> up(const Var<T>& d) override { return nearest_upsample(d, 2); }
};

template <typename T>
class ConvBilinearStage final : public SamplerStage<T> {
public:
    ConvBilinearStage(int channels, Rng& rng, const std::string& name)
        : w_(name + ".down.w", he_normal<T>(Shape{channels, channels, 2, 2}, rng)) {}
    Var<T> down(const Var<T>& x) override { return conv2d(x, w_.var, 2, 0); }
    Var<T> up(const Var<T>& d) override { return bilinear_upsample(d, 2); }
    std::vector<Parameter<T>*> parameters() override { return {&w_}; }

private:
    Parameter<T> w_;
};

template <typename T>
class S2DD2SStage final : public SamplerStage<T> {
public:
    Var<T> down(const Var<T>& x) override { return space_to_depth(x, 2); }
    Var<T> up(const Var<T>& d) override { return depth_to_space(d, 2); }
    int down_channel_factor() const override { return 4; }
};

/// Minimal inverting configuration: 2x2 stride-2 convolution down, 2x2
/// stride-2 transposed convolution up.
template <typename T>
class ConvDeconvStage final : public SamplerStage<T> {
public:
    ConvDeconvStage(int channels, Rng& rng, const std::string& name)
        : wd_(name + ".down.w", he_normal<T>(Shape{channels, channels, 2, 2}, rng)),
          wu_(name + ".up.w", he_normal<T>(Shape{channels, channels, 2, 2}, rng)) {}
    Var<T> down(const Var<T>& x) override { return conv2d(x, wd_.var, 2, 0); }
    Var<T> up(const Var<T>& d) override { return transposed_conv2d(d, wu_.var, 2); }
    std::vector<Parameter<T>*> parameters() override { return {&wd_, &wu_}; }

private:
    Parameter<T> wd_, wu_;
};

template <typename T>
class MaxPoolUnpoolStage final : public SamplerStage<T> {
public:
    Var<T> down(const Var<T>& x) override {
        src_shape_ = x.shape();
        auto [pooled, argmax] = max_pool_with_argmax(x, 2, 2);
        argmax_ = argmax;
        return pooled;
    }
    Var<T> up(const Var<T>& d) override {
        if (!argmax_) throw ContractError("maxpool_unpool: up() before down()");
        auto arg = std::exchange(argmax_, nullptr);  // consumed exactly once
        return max_unpool(d, arg, Shape{d.shape().n, d.shape().c, src_shape_.h,
                                        src_shape_.w});
    }
    void swap_side_info(SamplerStage<T>& other) override {
        auto& o = dynamic_cast<MaxPoolUnpoolStage&>(other);
        std::swap(argmax_, o.argmax_);
        std::swap(src_shape_, o.src_shape_);
    }

private:
    std::shared_ptr<ArgmaxMap> argmax_;
    Shape src_shape_{};
};

/// Index-guided stage: one IndexNet forward on the stage input yields both
/// maps; the encoder map steers pooling and the decoder map is cached for
/// the mirrored upsampling (or discarded when the upsampler is blind).
template <typename T>
class IndexedStage final : public SamplerStage<T> {
public:
    IndexedStage(std::shared_ptr<IndexNet<T>> net, bool guided_up, bool training)
        : net_(std::move(net)), guided_up_(guided_up), training_(training) {}

    Var<T> down(const Var<T>& x) override {
        IndexMaps<T> maps = net_->forward(x, training_);
        if (observer_) observer_(maps.encoder_index.value(), net_->config().k);
        if (guided_up_)
            side_ = StageSideInfo<T>{maps.decoder_index, x.shape().h, x.shape().w};
        return indexed_pool(x, maps.encoder_index, net_->config().k);
    }

    Var<T> up(const Var<T>& d) override {
        const int k = net_->config().k;
        if (!guided_up_) return bilinear_upsample(d, k);
        if (!side_) throw ContractError("ip_iu: up() before down()");
        StageSideInfo<T> info = *std::exchange(side_, std::nullopt);
        return indexed_upsample(d, info.decoder_index, k);
    }

    void swap_side_info(SamplerStage<T>& other) override {
        auto& o = dynamic_cast<IndexedStage&>(other);
        std::swap(side_, o.side_);
    }

    std::vector<Parameter<T>*> parameters() override { return net_->parameters(); }
    void set_training(bool t) { training_ = t; }
    void set_observer(std::function<void(const Tensor<T>&, int)> obs) {
        observer_ = std::move(obs);
    }

private:
    std::shared_ptr<IndexNet<T>> net_;
    bool guided_up_;
    bool training_;
    std::optional<StageSideInfo<T>> side_;
    std::function<void(const Tensor<T>&, int)> observer_;
};

/// Stage factory. indexnet is required for the IP pairings (the registry
/// supplies the instance with the right sharing scope).
template <typename T>
std::unique_ptr<SamplerStage<T>> make_sampler_stage(
    PairId id, int channels, Rng& rng, const std::string& name,
    std::shared_ptr<IndexNet<T>> indexnet = nullptr, bool training = true) {
    switch (id) {
        case PairId::AvgPoolNN: return std::make_unique<AvgPoolNNStage<T>>();
        case PairId::ConvBilinear:
            return std::make_unique<ConvBilinearStage<T>>(channels, rng, name);
        case PairId::S2D_D2S: return std::make_unique<S2DD2SStage<T>>();
        case PairId::ConvDeconv:
            return std::make_unique<ConvDeconvStage<T>>(channels, rng, name);
        case PairId::MaxPoolUnpool: return std::make_unique<MaxPoolUnpoolStage<T>>();
        case PairId::IP_IU:
        case PairId::IP_Bilinear:
            if (!indexnet)
                throw ConfigError(std::string(pair_name(id)) + " requires an IndexNet instance");
            return std::make_unique<IndexedStage<T>>(std::move(indexnet),
                                                     id == PairId::IP_IU, training);
    }
    throw ConfigError("unknown sampler pair");
}

}  // namespace ixn
