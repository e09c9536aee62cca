#include "ixn/recon.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ixn/metrics.hpp"
#include "ixn/png_io.hpp"

namespace ixn {

namespace {

Tensor<float> stack_batch(const std::vector<Tensor<float>>& images,
                          const std::vector<int>& order, std::size_t begin,
                          std::size_t end) {
    const Shape s0 = images[static_cast<std::size_t>(order[begin])].shape();
    Tensor<float> batch(Shape{static_cast<int>(end - begin), s0.c, s0.h, s0.w});
    const std::int64_t per = s0.numel();
    for (std::size_t i = begin; i < end; ++i) {
        const auto& img = images[static_cast<std::size_t>(order[i])];
        if (img.shape() != s0)
            throw DimensionError("dataset images disagree in shape: " + img.shape().str() +
                                 " vs " + s0.str());
        std::copy_n(img.data(), per, batch.data() + static_cast<std::int64_t>(i - begin) * per);
    }
    return batch;
}

Tensor<float> slice_image(const Tensor<float>& batch, int i) {
    const Shape s = batch.shape();
    Tensor<float> out(Shape{1, s.c, s.h, s.w});
    std::copy_n(batch.data() + static_cast<std::int64_t>(i) * out.numel(), out.numel(),
                out.data());
    return out;
}

}  // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.lr <= 0) throw ConfigError("lr must be positive");
    for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) {
        if (cfg.lr_decay_epochs[i] >= cfg.epochs)
            throw ConfigError("lr_decay_epochs must be < epochs");
        if (i > 0 && cfg.lr_decay_epochs[i] <= cfg.lr_decay_epochs[i - 1])
            throw ConfigError("lr_decay_epochs must be strictly increasing");
    }
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    int drops = 0;
    for (int d : cfg.lr_decay_epochs)
        if (epoch >= d) ++drops;
    return cfg.lr * std::pow(0.1, drops);
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

Var<float> ReconNet::ConvBlock::forward(const Var<float>& x, bool training) {
    Var<float> h = conv2d(x, w.var, 1, 1);
    if (bias) h = add_bias(h, bias->var);
    if (bn) {
        h = bn->forward(h, training);
        h = relu(h);
    }
    return h;
}

ReconNet::ConvBlock ReconNet::make_block(const std::string& name, int cin, int cout,
                                         bool final_block, Rng& rng) {
    ConvBlock b;
    b.w = Parameter<float>(name + ".w", he_normal<float>(Shape{cout, cin, 3, 3}, rng));
    if (final_block)
        b.bias = Parameter<float>(name + ".b", Tensor<float>(Shape{1, cout, 1, 1}, 0.0f));
    else
        b.bn = BatchNorm2d<float>(name + ".bn", cout);
    return b;
}

ReconNet::ReconNet(const ReconNetSpec& spec, Rng& rng) : spec_(spec) {
    if (pair_needs_indexnet(spec.pair) && !spec.indexnet)
        throw ConfigError(std::string(pair_name(spec.pair)) +
                          " requires an indexnet configuration");

    const std::vector<int> stage_channels = {32, 64, 128};
    if (spec.indexnet && pair_needs_indexnet(spec.pair))
        registry_ = StageRegistry<float>::create(*spec.indexnet, stage_channels, rng);

    // space-to-depth multiplies channels by 4 going down and divides by 4
    // coming up; every other pair preserves them.
    const int f = spec.pair == PairId::S2D_D2S ? 4 : 1;

    enc_.push_back(make_block("trunk.enc0", 1, 32, false, rng));
    enc_.push_back(make_block("trunk.enc1", 32 * f, 64, false, rng));
    enc_.push_back(make_block("trunk.enc2", 64 * f, 128, false, rng));
    enc_.push_back(make_block("trunk.enc3", 128 * f, 256, false, rng));
    enc_.push_back(make_block("trunk.enc4", 256, 128, false, rng));
    dec_.push_back(make_block("trunk.dec0", 128 / f, 64, false, rng));
    dec_.push_back(make_block("trunk.dec1", 64 / f, 32, false, rng));
    dec_.push_back(make_block("trunk.dec2", 32 / f, 1, true, rng));  // no BN/ReLU

    for (int i = 0; i < 3; ++i) {
        std::shared_ptr<IndexNet<float>> net;
        if (registry_.size() > 0) net = registry_.stage_ptr(static_cast<std::size_t>(i));
        stages_.push_back(make_sampler_stage<float>(spec.pair, stage_channels[static_cast<std::size_t>(i)],
                                                    rng, "stage" + std::to_string(i), net));
    }
}

void ReconNet::set_encoder_observer(std::function<void(const Tensor<float>&, int)> obs) {
    observer_ = std::move(obs);
    for (auto& s : stages_)
        if (auto* g = dynamic_cast<IndexedStage<float>*>(s.get()))
            g->set_observer(observer_);
}

void ReconNet::swap_stage_side_info(int a, int b) {
    stages_.at(static_cast<std::size_t>(a))
        ->swap_side_info(*stages_.at(static_cast<std::size_t>(b)));
}

Var<float> ReconNet::forward(const Var<float>& x, bool training) {
    if (x.shape().c != 1)
        throw DimensionError("recon net expects single-channel input, got " +
                             x.shape().str());
    for (auto& s : stages_)
        if (auto* g = dynamic_cast<IndexedStage<float>*>(s.get())) g->set_training(training);

    Var<float> h = enc_[0].forward(x, training);
    Var<float> d1 = stages_[0]->down(h);
    h = enc_[1].forward(d1, training);
    Var<float> d2 = stages_[1]->down(h);
    h = enc_[2].forward(d2, training);
    Var<float> d3 = stages_[2]->down(h);
    h = enc_[3].forward(d3, training);
    h = enc_[4].forward(h, training);
    h = stages_[2]->up(h);
    h = dec_[0].forward(h, training);
    h = stages_[1]->up(h);
    h = dec_[1].forward(h, training);
    h = stages_[0]->up(h);
    return dec_[2].forward(h, training);
}

std::vector<Parameter<float>*> ReconNet::trunk_parameters() {
    std::vector<Parameter<float>*> out;
    auto push_block = [&out](ConvBlock& b) {
        out.push_back(&b.w);
        if (b.bias) out.push_back(&*b.bias);
        if (b.bn) {
            out.push_back(&b.bn->gamma);
            out.push_back(&b.bn->beta);
        }
    };
    for (auto& b : enc_) push_block(b);
    for (auto& b : dec_) push_block(b);
    return out;
}

std::vector<Parameter<float>*> ReconNet::sampler_parameters() {
    std::vector<Parameter<float>*> out;
    for (auto& s : stages_)
        if (!dynamic_cast<IndexedStage<float>*>(s.get()))
            for (auto* p : s->parameters()) out.push_back(p);
    for (auto* p : registry_.parameters()) out.push_back(p);
    return out;
}

std::vector<Parameter<float>*> ReconNet::parameters() {
    std::vector<Parameter<float>*> out = trunk_parameters();
    for (auto* p : sampler_parameters()) out.push_back(p);
    return out;
}

std::vector<NamedTensor> ReconNet::named_state() {
    std::vector<NamedTensor> out = as_named(parameters());
    auto push_bn = [&out](BatchNorm2d<float>& bn) {
        // gamma is named "<layer>.gamma"; running stats live beside it
        const std::string prefix = bn.gamma.name.substr(0, bn.gamma.name.size() - 6);
        out.push_back({prefix + ".running_mean", &bn.running_mean});
        out.push_back({prefix + ".running_var", &bn.running_var});
    };
    for (auto& b : enc_)
        if (b.bn) push_bn(*b.bn);
    for (auto& b : dec_)
        if (b.bn) push_bn(*b.bn);
    std::vector<const void*> seen;
    for (std::size_t i = 0; i < registry_.size(); ++i) {
        auto net = registry_.stage_ptr(i);
        if (std::find(seen.begin(), seen.end(), net.get()) != seen.end()) continue;
        seen.push_back(net.get());
        for (auto* bn : net->batch_norms()) push_bn(*bn);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training / evaluation
// ---------------------------------------------------------------------------

std::vector<double> train(ReconNet& net, const std::vector<Tensor<float>>& images,
                          const TrainConfig& cfg) {
    validate(cfg);
    if (images.empty()) throw ContractError("train: empty dataset");

    Rng rng(cfg.seed ^ 0x7465616368ULL);  // shuffle stream, distinct from init
    std::vector<int> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (cfg.subset_size > 0 && cfg.subset_size < static_cast<int>(order.size()))
        order.resize(static_cast<std::size_t>(cfg.subset_size));

    auto params = net.parameters();
    std::unique_ptr<Adam<float>> adam;
    std::unique_ptr<SGD<float>> sgd;
    if (cfg.optimizer == Optimizer::Adam)
        adam = std::make_unique<Adam<float>>(params, static_cast<float>(cfg.lr));
    else
        sgd = std::make_unique<SGD<float>>(params, static_cast<float>(cfg.lr),
                                           static_cast<float>(cfg.momentum));

    std::vector<double> curve;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const float lr = static_cast<float>(lr_at_epoch(cfg, epoch));
        if (adam)
            adam->set_lr(lr);
        else
            sgd->set_lr(lr);
        std::shuffle(order.begin(), order.end(), rng);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            Tensor<float> batch = stack_batch(images, order, b, e);
            Var<float> input(batch, false);
            Var<float> pred = net.forward(input, true);
            Var<float> loss = l1_loss(pred, batch);
            backward(loss);
            if (adam)
                adam->step();
            else
                sgd->step();
            if (adam)
                adam->zero_grad();
            else
                sgd->zero_grad();
            epoch_loss += loss.value()[0];
            ++batches;
        }
        epoch_loss /= static_cast<double>(batches);
        if (!std::isfinite(epoch_loss))
            throw TrainingError("training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch));
        curve.push_back(epoch_loss);
    }
    return curve;
}

ReconReport evaluate(ReconNet& net, const std::vector<Tensor<float>>& images,
                     int batch_size) {
    if (images.empty()) throw ContractError("evaluate: empty dataset");
    std::vector<int> order(images.size());
    std::iota(order.begin(), order.end(), 0);

    double mse_sum = 0.0, mae_sum = 0.0, ssim_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(batch_size)) {
        const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(batch_size));
        Tensor<float> batch = stack_batch(images, order, b, e);
        Var<float> pred = net.forward(Var<float>(batch, false), false);
        for (std::size_t i = b; i < e; ++i) {
            const Tensor<float> p = slice_image(pred.value(), static_cast<int>(i - b));
            const Tensor<float> t = slice_image(batch, static_cast<int>(i - b));
            mse_sum += mse(p, t);
            mae_sum += mae(p, t);
            ssim_sum += ssim(p, t);
        }
    }
    const double count = static_cast<double>(images.size());
    ReconReport r;
    r.pair = pair_name(net.spec().pair);
    r.psnr_db = psnr_from_mse(mse_sum / count);
    r.ssim = ssim_sum / count;
    r.mae = mae_sum / count;
    r.rmse = std::sqrt(mse_sum / count);
    return r;
}

// ---------------------------------------------------------------------------
// Comparison harness
// ---------------------------------------------------------------------------

std::string variant_label(const PairingRequest& req) {
    if (!req.indexnet) return "-";
    return std::string(family_name(req.indexnet->family)) + "_" + variant_name(*req.indexnet);
}

std::vector<PairingRequest> default_pairings() {
    IndexNetConfig m2o;
    m2o.family = Family::M2O;
    m2o.nonlinear = true;
    m2o.context = true;
    return {
        {PairId::AvgPoolNN, std::nullopt},
        {PairId::ConvBilinear, std::nullopt},
        {PairId::S2D_D2S, std::nullopt},
        {PairId::ConvDeconv, std::nullopt},
        {PairId::MaxPoolUnpool, std::nullopt},
        {PairId::IP_IU, m2o},
        {PairId::IP_Bilinear, m2o},
    };
}

std::vector<PairingResult> run_table3(const std::vector<PairingRequest>& pairings,
                                      const TrainConfig& cfg,
                                      const std::vector<Tensor<float>>& train_images,
                                      const std::vector<Tensor<float>>& test_images) {
    // Report order is independent of request order.
    std::vector<PairingRequest> ordered = pairings;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const PairingRequest& a, const PairingRequest& b) {
                         if (a.pair != b.pair) return a.pair < b.pair;
                         PairingRequest la = a, lb = b;
                         return variant_label(la) < variant_label(lb);
                     });

    std::vector<Tensor<float>> eval_images = test_images;
    if (cfg.eval_subset > 0 && cfg.eval_subset < static_cast<int>(eval_images.size()))
        eval_images.resize(static_cast<std::size_t>(cfg.eval_subset));

    std::vector<PairingResult> results;
    for (const auto& req : ordered) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(cfg.seed);
        PairingResult res;
        res.model = std::make_shared<ReconNet>(ReconNetSpec{req.pair, req.indexnet}, rng);
        res.loss_curve = train(*res.model, train_images, cfg);
        res.report = evaluate(*res.model, eval_images, cfg.batch_size);
        res.report.variant = variant_label(req);
        res.report.epochs = cfg.epochs;
        res.report.seed = cfg.seed;
        res.report.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back(std::move(res));
    }
    return results;
}

std::string reports_to_csv(const std::vector<ReconReport>& reports, bool include_timing) {
    std::string out = "pair,variant,psnr_db,ssim,mae,rmse,epochs,seconds,seed\n";
    char line[256];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof(line), "%s,%s,%.4f,%.6f,%.6f,%.6f,%d,%.3f,%llu\n",
                      r.pair.c_str(), r.variant.c_str(), r.psnr_db, r.ssim, r.mae, r.rmse,
                      r.epochs, include_timing ? r.seconds : 0.0,
                      static_cast<unsigned long long>(r.seed));
        out += line;
    }
    return out;
}

void write_reconstruction_grid(const std::string& path,
                               const std::vector<Tensor<float>>& inputs,
                               std::vector<PairingResult>& results, int count) {
    count = std::min<int>(count, static_cast<int>(inputs.size()));
    if (count < 1) throw ContractError("reconstruction grid: no input images");
    const int cell = 32, gap = 2;
    const int rows = 1 + static_cast<int>(results.size());
    const int width = count * (cell + gap) + gap;
    const int height = rows * (cell + gap) + gap;
    std::vector<std::uint8_t> canvas(static_cast<std::size_t>(width) * height, 32);

    auto blit = [&](const Tensor<float>& img, int row, int col) {
        const int oy = gap + row * (cell + gap), ox = gap + col * (cell + gap);
        for (int y = 0; y < cell; ++y)
            for (int x = 0; x < cell; ++x) {
                const float v = std::clamp(img.at(0, 0, y, x), 0.0f, 1.0f);
                canvas[static_cast<std::size_t>(oy + y) * width + ox + x] =
                    static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    };

    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    Tensor<float> batch = stack_batch(inputs, order, 0, static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) blit(slice_image(batch, i), 0, i);
    for (std::size_t r = 0; r < results.size(); ++r) {
        Var<float> pred = results[r].model->forward(Var<float>(batch, false), false);
        for (int i = 0; i < count; ++i)
            blit(slice_image(pred.value(), i), static_cast<int>(r) + 1, i);
    }
    write_png_gray8(path, width, height, canvas);
}

std::string loss_curves_to_json(const std::vector<PairingRequest>&,
                                const std::vector<PairingResult>& results) {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& r : results) {
        const std::string key = r.report.pair + "/" + r.report.variant;
        doc[key] = r.loss_curve;
    }
    return doc.dump(2) + "\n";
}

}  // namespace ixn
