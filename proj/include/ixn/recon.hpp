#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ixn/indexnet.hpp"
#include "ixn/optim.hpp"
#include "ixn/sampler_pair.hpp"
#include "ixn/serialize.hpp"

namespace ixn {

// Fixed encoder-decoder reconstruction network
// C(32)-D-C(64)-D-C(128)-D-C(256)-C(128)-U-C(64)-U-C(32)-U-C(1),
// each C(n) a 3x3 conv + BN + ReLU except the final C(1).

enum class Optimizer { Adam, SGD };

struct TrainConfig {
    int epochs = 10;
    int batch_size = 100;
    double lr = 0.01;
    std::vector<int> lr_decay_epochs = {5, 7, 9};  // strictly increasing, < epochs
    Optimizer optimizer = Optimizer::Adam;
    double momentum = 0.9;  // SGD only
    std::uint64_t seed = 1;
    int subset_size = 0;    // 0 = full training set
    int eval_subset = 0;    // 0 = full test set
};

void validate(const TrainConfig& cfg);

/// Learning rate in effect during 1-indexed epoch `epoch`: base lr decayed
/// x10 at each decay epoch.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct ReconNetSpec {
    PairId pair = PairId::MaxPoolUnpool;
    std::optional<IndexNetConfig> indexnet;  // required iff pair is index-guided
};

struct ReconReport {
    std::string pair;
    std::string variant;  // indexnet family/variant label, "-" otherwise
    double psnr_db = 0;
    double ssim = 0;
    double mae = 0;
    double rmse = 0;  // the paper reports this under its "MSE" column name
    int epochs = 0;
    double seconds = 0;
    std::uint64_t seed = 0;
};

class ReconNet {
public:
    ReconNet(const ReconNetSpec& spec, Rng& rng);

    /// (N, 1, 32, 32) -> (N, 1, 32, 32).
    Var<float> forward(const Var<float>& x, bool training);

    std::vector<Parameter<float>*> parameters();
    /// Everything needed to restore the model for evaluation: parameters
    /// plus batch-norm running statistics.
    std::vector<NamedTensor> named_state();
    /// Conv trunk only (shared architecture across pairs): excludes sampler
    /// and IndexNet parameters.
    std::vector<Parameter<float>*> trunk_parameters();
    std::vector<Parameter<float>*> sampler_parameters();

    const ReconNetSpec& spec() const { return spec_; }

    /// Observer invoked with every encoder index map produced during a
    /// forward pass (index-guided pairs only); used by invariant checks.
    void set_encoder_observer(std::function<void(const Tensor<float>&, int)> obs);

    /// Test hook: exchanges stage side information between the two given
    /// down/up stages (0-based). Blind pairs must be insensitive to this.
    void swap_stage_side_info(int a, int b);

private:
    struct ConvBlock {
        Parameter<float> w;
        std::optional<Parameter<float>> bias;    // final block only
        std::optional<BatchNorm2d<float>> bn;    // absent on final block
        Var<float> forward(const Var<float>& x, bool training);
    };
    ConvBlock make_block(const std::string& name, int cin, int cout, bool final_block,
                         Rng& rng);

    ReconNetSpec spec_;
    std::vector<ConvBlock> enc_;   // C32, C64, C128, C256, C128
    std::vector<ConvBlock> dec_;   // C64, C32, C1
    std::vector<std::unique_ptr<SamplerStage<float>>> stages_;  // 3 down/up stages
    StageRegistry<float> registry_;
    std::function<void(const Tensor<float>&, int)> observer_;
};

/// Per-epoch mean training loss; throws TrainingError naming the epoch on a
/// non-finite loss.
std::vector<double> train(ReconNet& net, const std::vector<Tensor<float>>& images,
                          const TrainConfig& cfg);

ReconReport evaluate(ReconNet& net, const std::vector<Tensor<float>>& images,
                     int batch_size = 100);

/// One requested pairing of the comparison table.
struct PairingRequest {
    PairId pair;
    std::optional<IndexNetConfig> indexnet;
};

struct PairingResult {
    ReconReport report;
    std::vector<double> loss_curve;
    std::shared_ptr<ReconNet> model;
};

/// The Table-3-style pairing list: the classical pairs, the index-guided
/// pair with Modelwise-NL-C / HIN-NL-C / M2O-NL-C, and the guided-down
/// blind-up ablation.
std::vector<PairingRequest> default_pairings();

/// Trains and evaluates every requested pairing with the shared TrainConfig.
std::vector<PairingResult> run_table3(const std::vector<PairingRequest>& pairings,
                                      const TrainConfig& cfg,
                                      const std::vector<Tensor<float>>& train_images,
                                      const std::vector<Tensor<float>>& test_images);

std::string variant_label(const PairingRequest& req);

/// CSV with the pinned header
/// pair,variant,psnr_db,ssim,mae,rmse,epochs,seconds,seed.
/// include_timing=false zeroes the seconds column for byte-stable replays.
std::string reports_to_csv(const std::vector<ReconReport>& reports,
                           bool include_timing = true);

/// Grid PNG: top row input images, one row of reconstructions per result.
void write_reconstruction_grid(const std::string& path,
                               const std::vector<Tensor<float>>& inputs,
                               std::vector<PairingResult>& results, int count = 8);

/// JSON document mapping "pair/variant" to the per-epoch loss curve.
std::string loss_curves_to_json(const std::vector<PairingRequest>& pairings,
                                const std::vector<PairingResult>& results);

}  // namespace ixn
