// Acceptance gate for the workbench. Each criterion prints PASS/FAIL with
// its pinned tolerance; the binary exits non-zero if any gating criterion
// fails. The full-scale reproduction is informational only and is not run
// here (100 epochs on the full corpus; see README).

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ixn/gradcheck.hpp"
#include "ixn/guided.hpp"
#include "ixn/idx_io.hpp"
#include "ixn/index_functions.hpp"
#include "ixn/indexnet.hpp"
#include "ixn/random.hpp"
#include "ixn/recon.hpp"

using namespace ixn;

namespace {

constexpr double kDegeneracyTol = 1e-6;   // criterion 1
constexpr double kWindowSumTol = 1e-5;    // criterion 4
constexpr double kGuidedMarginDb = 2.0;   // criterion 5
const std::vector<std::uint64_t> kSeeds = {1, 2, 3};

struct Criterion {
    std::string name;
    bool pass = false;
    std::string detail;
};

Tensor<double> rnd(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor<double> t = random_uniform<double>(s, rng);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * t[i];
    return t;
}

template <typename Fn>
Tensor<double> per_window(const Tensor<double>& x, int k, Fn fn) {
    const Shape xs = x.shape();
    Tensor<double> out(xs);
    for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < xs.c; ++c)
            for (int wy = 0; wy < xs.h / k; ++wy)
                for (int wx = 0; wx < xs.w / k; ++wx) {
                    Tensor<double> region(Shape{1, 1, k, k});
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            region.at(0, 0, ky, kx) = x.at(n, c, wy * k + ky, wx * k + kx);
                    Tensor<double> idx = fn(region);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            out.at(n, c, wy * k + ky, wx * k + kx) = idx.at(0, 0, ky, kx);
                }
    return out;
}

double max_rel_diff(const Tensor<double>& a, const Tensor<double>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst,
                         std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return worst;
}

// ---- criterion 1: indexed sampling degenerates to the classical operators

Criterion check_degeneracy() {
    Criterion c{"1 oracle degeneracy (100 tensors, rel tol 1e-6)"};
    double worst = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Tensor<double> x = rnd({1, 8, 16, 16}, 1000 + s);
        Var<double> xv(x);

        Tensor<double> argmax = per_window(x, 2, index_max<double>);
        worst = std::max(worst,
                         max_rel_diff(indexed_pool(xv, Var<double>(argmax), 2).value(),
                                      max_pool_with_argmax(xv, 2, 2).first.value()));

        Tensor<double> uniform(x.shape(), 0.25);
        worst = std::max(worst, max_rel_diff(indexed_pool(xv, Var<double>(uniform), 2).value(),
                                             avg_pool(xv, 2, 2).value()));

        Tensor<double> d = rnd({1, 8, 8, 8}, 2000 + s);
        Tensor<double> ones(Shape{1, 8, 16, 16}, 1.0);
        worst = std::max(worst,
                         max_rel_diff(indexed_upsample(Var<double>(d), Var<double>(ones), 2).value(),
                                      nearest_upsample(Var<double>(d), 2).value()));
    }
    c.pass = worst <= kDegeneracyTol;
    c.detail = "max rel err " + std::to_string(worst);
    return c;
}

// ---- criterion 2: finite-difference gradient suite

Criterion check_gradients() {
    Criterion c{"2 gradient suite (f64 central differences, tol 1e-4)"};
    const auto results = run_all_gradchecks();
    double worst = 0;
    int failures = 0;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.pass) {
            ++failures;
            std::printf("    gradcheck FAIL: %s (%.3e)\n", r.name.c_str(), r.max_rel_err);
        }
    }
    c.pass = failures == 0 && !results.empty();
    c.detail = std::to_string(results.size()) + " cases, worst rel err " +
               std::to_string(worst);
    return c;
}

// ---- criterion 3: parameter-count contract

Criterion check_param_counts() {
    Criterion c{"3 parameter-count contract (K=2, C in {4,32})"};
    struct Row {
        Family f;
        bool nl, ctx;
        std::int64_t c4, c32;
    };
    const Row rows[] = {
        {Family::HIN, false, false, 64, 512},
        {Family::HIN, true, false, 160, 8448},
        {Family::HIN, true, true, 544, 33024},
        {Family::O2O_Modelwise, false, false, 16, 16},
        {Family::O2O_Modelwise, true, false, 40, 40},
        {Family::O2O_Modelwise, true, true, 136, 136},
        {Family::O2O_SharedStagewise, false, false, 16, 16},
        {Family::O2O_SharedStagewise, true, false, 40, 40},
        {Family::O2O_SharedStagewise, true, true, 136, 136},
        {Family::O2O_UnsharedStagewise, false, false, 64, 512},
        {Family::O2O_UnsharedStagewise, true, false, 160, 1280},  // grouped form
        {Family::O2O_UnsharedStagewise, true, true, 544, 4352},   // grouped form
        {Family::M2O, false, false, 256, 16384},
        {Family::M2O, true, false, 640, 40960},
        {Family::M2O, true, true, 2176, 139264},
    };
    int failures = 0;
    for (const Row& r : rows) {
        for (int channels : {4, 32}) {
            IndexNetConfig cfg;
            cfg.family = r.f;
            cfg.nonlinear = r.nl;
            cfg.context = r.ctx;
            cfg.k = 2;
            cfg.channels = channels;
            const std::int64_t want = channels == 4 ? r.c4 : r.c32;
            const std::int64_t got = indexnet_param_count(cfg);
            if (got != want) {
                ++failures;
                std::printf("    params FAIL: %s %s C=%d got %lld want %lld\n",
                            family_name(r.f), variant_name(cfg).c_str(), channels,
                            static_cast<long long>(got), static_cast<long long>(want));
            }
        }
    }
    c.pass = failures == 0;
    c.detail = "30 rows checked";
    return c;
}

// ---- criterion 4: normalization invariants

Criterion check_normalization() {
    Criterion c{"4 normalization invariants (1000 tensors, sum tol 1e-5)"};
    IndexNetConfig cfg;  // default scheme
    cfg.k = 2;
    double worst_sum = 0;
    bool bounds_ok = true;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        Tensor<double> logits = rnd({1, 4, 8, 8}, 3000 + s, -4.0, 4.0);
        IndexMaps<double> maps = normalize_index(Var<double>(logits), cfg);
        const Tensor<double>& enc = maps.encoder_index.value();
        Tensor<double> x = rnd({1, 4, 8, 8}, 4000 + s);
        Tensor<double> pooled = indexed_pool(Var<double>(x), maps.encoder_index, 2).value();
        const Shape es = enc.shape();
        for (int n = 0; n < es.n; ++n)
            for (int ch = 0; ch < es.c; ++ch)
                for (int wy = 0; wy < es.h / 2; ++wy)
                    for (int wx = 0; wx < es.w / 2; ++wx) {
                        double sum = 0, lo = 1e300, hi = -1e300;
                        for (int ky = 0; ky < 2; ++ky)
                            for (int kx = 0; kx < 2; ++kx) {
                                sum += enc.at(n, ch, wy * 2 + ky, wx * 2 + kx);
                                lo = std::min(lo, x.at(n, ch, wy * 2 + ky, wx * 2 + kx));
                                hi = std::max(hi, x.at(n, ch, wy * 2 + ky, wx * 2 + kx));
                            }
                        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                        const double v = pooled.at(n, ch, wy, wx);
                        bounds_ok = bounds_ok && v >= lo - 1e-9 && v <= hi + 1e-9;
                    }
    }
    c.pass = worst_sum <= kWindowSumTol && bounds_ok;
    c.detail = "worst window-sum deviation " + std::to_string(worst_sum) +
               (bounds_ok ? ", bounds ok" : ", BOUNDS VIOLATED");
    return c;
}

// ---- criteria 5/6/8: desk-scale reconstruction comparison

std::vector<Tensor<float>> load_or_synthesize(bool train_split,
                                              const std::string& data_dir) {
    namespace fs = std::filesystem;
    const std::string name =
        train_split ? "train-images-idx3-ubyte.gz" : "t10k-images-idx3-ubyte.gz";
    const fs::path path = fs::path(data_dir) / name;
    if (!fs::exists(path)) {
        fs::create_directories(data_dir);
        std::printf("  [data] %s not found; writing synthetic stand-in corpus\n",
                    path.string().c_str());
        write_idx_images(path.string(),
                         make_synthetic_images(train_split ? 6000 : 1000,
                                               train_split ? 7 : 8));
    }
    return load_fashion_mnist(path.string());
}

IndexNetConfig guided_config() {
    IndexNetConfig cfg;
    cfg.family = Family::M2O;
    cfg.nonlinear = true;
    cfg.context = true;
    return cfg;
}

TrainConfig desk_config(std::uint64_t seed) {
    TrainConfig tc;  // defaults: 10 epochs, batch 100, lr 0.01, decay {5,7,9}
    tc.subset_size = 4000;
    tc.eval_subset = 1000;
    tc.seed = seed;
    return tc;
}

struct DeskResults {
    std::map<std::string, double> mean_psnr;  // keyed by "pair/variant"
    // timing-stripped seed-1 CSV over the ordering pairings, for the replay
    std::string seed1_reference;
};

DeskResults run_desk_suite(const std::vector<Tensor<float>>& train_images,
                           const std::vector<Tensor<float>>& test_images) {
    const std::vector<PairingRequest> pairings = {
        {PairId::ConvBilinear, std::nullopt},
        {PairId::MaxPoolUnpool, std::nullopt},
        {PairId::IP_IU, guided_config()},
        {PairId::IP_Bilinear, guided_config()},
    };
    DeskResults out;
    std::map<std::string, double> totals;
    for (std::uint64_t seed : kSeeds) {
        const auto results =
            run_table3(pairings, desk_config(seed), train_images, test_images);
        std::vector<ReconReport> reports;
        for (const auto& r : results) {
            const std::string key = r.report.pair + "/" + r.report.variant;
            totals[key] += r.report.psnr_db;
            reports.push_back(r.report);
            std::printf("  [desk] seed %llu  %-14s %-10s psnr %.2f dB\n",
                        static_cast<unsigned long long>(seed), r.report.pair.c_str(),
                        r.report.variant.c_str(), r.report.psnr_db);
            std::fflush(stdout);
        }
        if (seed == 1) {
            std::vector<ReconReport> ordering_rows;
            for (const auto& r : reports)
                if (r.pair != "ip_bilinear") ordering_rows.push_back(r);
            out.seed1_reference = reports_to_csv(ordering_rows, false);
        }
    }
    for (const auto& [key, total] : totals)
        out.mean_psnr[key] = total / static_cast<double>(kSeeds.size());
    return out;
}

Criterion check_ordering(const DeskResults& desk) {
    Criterion c{"5 reconstruction ordering (desk scale, 3 seeds, margin 2 dB)"};
    const double guided = desk.mean_psnr.at("ip_iu/m2o_nl_c");
    const double maxpool = desk.mean_psnr.at("maxpool_unpool/-");
    const double conv = desk.mean_psnr.at("conv_bilinear/-");
    const double margin = guided - std::max(maxpool, conv);
    c.pass = guided > maxpool && maxpool > conv && margin >= kGuidedMarginDb;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "mean PSNR: guided %.2f, maxpool %.2f, conv-bilinear %.2f (margin %.2f dB)",
                  guided, maxpool, conv, margin);
    c.detail = buf;
    return c;
}

Criterion check_ablation(const DeskResults& desk) {
    Criterion c{"6 decoder-path ablation (guided up vs blind bilinear up)"};
    const double guided = desk.mean_psnr.at("ip_iu/m2o_nl_c");
    const double ablated = desk.mean_psnr.at("ip_bilinear/m2o_nl_c");
    c.pass = ablated < guided;
    char buf[120];
    std::snprintf(buf, sizeof buf, "mean PSNR: guided up %.2f, bilinear up %.2f", guided,
                  ablated);
    c.detail = buf;
    return c;
}

Criterion check_determinism(const DeskResults& desk,
                            const std::vector<Tensor<float>>& train_images,
                            const std::vector<Tensor<float>>& test_images) {
    Criterion c{"8 determinism (seed-1 replay, byte-identical CSV)"};
    const std::vector<PairingRequest> pairings = {
        {PairId::ConvBilinear, std::nullopt},
        {PairId::MaxPoolUnpool, std::nullopt},
        {PairId::IP_IU, guided_config()},
    };
    const auto results = run_table3(pairings, desk_config(1), train_images, test_images);
    std::vector<ReconReport> reports;
    for (const auto& r : results) reports.push_back(r.report);
    const std::string replay = reports_to_csv(reports, false);
    c.pass = replay == desk.seed1_reference;
    c.detail = c.pass ? "replay matches byte-for-byte" : "replay CSV differs";
    return c;
}

}  // namespace

int main() {
    std::printf("acceptance suite\n================\n");
    std::vector<Criterion> criteria;

    criteria.push_back(check_degeneracy());
    criteria.push_back(check_gradients());
    criteria.push_back(check_param_counts());
    criteria.push_back(check_normalization());

    std::string data_dir = "data";
    if (const char* env = std::getenv("IXN_DATA_DIR"); env && *env) data_dir = env;
    const auto train_images = load_or_synthesize(true, data_dir);
    const auto test_images = load_or_synthesize(false, data_dir);
    std::printf("  [data] %zu training / %zu test images from %s\n", train_images.size(),
                test_images.size(), data_dir.c_str());
    std::fflush(stdout);

    const DeskResults desk = run_desk_suite(train_images, test_images);
    criteria.push_back(check_ordering(desk));
    criteria.push_back(check_ablation(desk));
    std::printf(
        "criterion 7 (full-scale reproduction) is informational and not run here;\n"
        "see README for the full profile invocation.\n");
    criteria.push_back(check_determinism(desk, train_images, test_images));

    bool all_pass = true;
    std::printf("\nresults\n-------\n");
    for (const auto& c : criteria) {
        std::printf("criterion %-62s %s\n    %s\n", c.name.c_str(),
                    c.pass ? "PASS" : "FAIL", c.detail.c_str());
        all_pass = all_pass && c.pass;
    }
    std::printf("\noverall: %s\n", all_pass ? "PASS" : "FAIL");
    return all_pass ? 0 : 1;
}
