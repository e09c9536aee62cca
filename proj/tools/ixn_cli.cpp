// ixn: index-guided sampling workbench.
//
// Subcommands: train, eval, compare, gradcheck, params, fetch-data.
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 I/O error.

#include <CLI11.hpp>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ixn/config.hpp"
#include "ixn/fetch.hpp"
#include "ixn/gradcheck.hpp"
#include "ixn/idx_io.hpp"
#include "ixn/recon.hpp"
#include "ixn/serialize.hpp"

namespace {

using namespace ixn;

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_path, "key=value config file");
    cmd->add_option("--set", opts.overrides, "override a config key (key=value)")
        ->take_all();
}

RunConfig make_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig tc;  // defaults = desk profile
    const std::string profile = cfg.get("profile", "desk");
    if (profile == "desk") {
        tc.subset_size = 4000;
        tc.eval_subset = 1000;
    } else if (profile == "full") {
        tc.epochs = 100;
        tc.lr_decay_epochs = {50, 70, 85};
        tc.subset_size = 0;
        tc.eval_subset = 0;
    } else if (profile == "smoke") {
        tc.epochs = 1;
        tc.lr_decay_epochs = {};
        tc.subset_size = 200;
        tc.eval_subset = 50;
    } else {
        throw ConfigError("unknown profile '" + profile + "' (desk, full, smoke)");
    }
    tc.epochs = static_cast<int>(cfg.get_int("epochs", tc.epochs));
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size", tc.batch_size));
    tc.lr = cfg.get_double("lr", tc.lr);
    if (cfg.has("lr_decay_epochs")) {
        tc.lr_decay_epochs.clear();
        for (long e : cfg.get_int_list("lr_decay_epochs"))
            tc.lr_decay_epochs.push_back(static_cast<int>(e));
    }
    const std::string opt = cfg.get("optimizer", "adam");
    if (opt == "adam")
        tc.optimizer = Optimizer::Adam;
    else if (opt == "sgd")
        tc.optimizer = Optimizer::SGD;
    else
        throw ConfigError("unknown optimizer '" + opt + "' (adam, sgd)");
    tc.momentum = cfg.get_double("momentum", tc.momentum);
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
    tc.subset_size = static_cast<int>(cfg.get_int("subset_size", tc.subset_size));
    tc.eval_subset = static_cast<int>(cfg.get_int("eval_subset", tc.eval_subset));
    if (cfg.get("loss", "l1") != "l1")
        throw ConfigError("only the l1 loss is supported");
    validate(tc);
    return tc;
}

std::optional<IndexNetConfig> indexnet_from(const RunConfig& cfg, PairId pair) {
    if (!pair_needs_indexnet(pair)) return std::nullopt;
    IndexNetConfig inc;
    const std::string family = cfg.get("family", "m2o");
    const auto fam = family_from_name(family);
    if (!fam) throw ConfigError("unknown family '" + family + "'");
    inc.family = *fam;
    const std::string variant = cfg.get("variant", "nl_c");
    if (!apply_variant(inc, variant))
        throw ConfigError("unknown variant '" + variant + "' (linear, nl, nl_c)");
    const std::string norm = cfg.get("normalization", "sigmoid_softmax_enc");
    const auto n = normalization_from_name(norm);
    if (!n) throw ConfigError("unknown normalization '" + norm + "'");
    inc.normalization = *n;
    return inc;
}

/// "pair" or "pair:family_variant" tokens from the pairs key / --pairs flag.
PairingRequest parse_pairing(const std::string& token, const RunConfig& cfg) {
    std::string pair_part = token, label;
    if (const auto colon = token.find(':'); colon != std::string::npos) {
        pair_part = token.substr(0, colon);
        label = token.substr(colon + 1);
    }
    const auto id = pair_from_name(pair_part);
    if (!id) throw ConfigError("unknown sampler pair '" + pair_part + "'");
    PairingRequest req{*id, std::nullopt};
    if (!label.empty()) {
        auto inc = indexnet_config_from_label(label);
        if (!inc) throw ConfigError("unknown indexnet label '" + label + "'");
        const std::string norm = cfg.get("normalization", "sigmoid_softmax_enc");
        const auto n = normalization_from_name(norm);
        if (!n) throw ConfigError("unknown normalization '" + norm + "'");
        inc->normalization = *n;
        req.indexnet = inc;
    } else {
        req.indexnet = indexnet_from(cfg, *id);
    }
    if (pair_needs_indexnet(*id) && !req.indexnet)
        throw ConfigError("pair '" + pair_part + "' needs an indexnet (pair:family_variant)");
    return req;
}

std::string dataset_path(const RunConfig& cfg, bool train_split) {
    const std::string dir = cfg.get("dataset_dir", "data");
    const std::string def = dir + (train_split ? "/train-images-idx3-ubyte.gz"
                                               : "/t10k-images-idx3-ubyte.gz");
    return cfg.get(train_split ? "train_images" : "test_images", def);
}

std::vector<Tensor<float>> load_split(const RunConfig& cfg, bool train_split) {
    const std::string path = dataset_path(cfg, train_split);
    if (!std::filesystem::exists(path))
        throw ConfigError("dataset not found: '" + path +
                          "' (run fetch-data or set dataset_dir/train_images/test_images)");
    const std::string resize = cfg.get("resize", "bilinear");
    ResizeMode mode;
    if (resize == "bilinear")
        mode = ResizeMode::Bilinear;
    else if (resize == "zeropad")
        mode = ResizeMode::ZeroPad;
    else
        throw ConfigError("unknown resize mode '" + resize + "' (bilinear, zeropad)");
    return load_fashion_mnist(path, mode);
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << content;
    if (!f) throw IoError("short write on '" + path + "'");
}

/// Output directory for commands that write artifacts. When out_dir is not
/// configured, a fresh timestamped directory keeps reruns from clobbering
/// earlier results.
std::string out_dir(const RunConfig& cfg) {
    std::string dir = cfg.get("out_dir");
    if (dir.empty()) {
        const std::time_t now = std::time(nullptr);
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "out/run-%Y%m%d-%H%M%S", std::localtime(&now));
        dir = stamp;
        std::string candidate = dir;
        for (int n = 1; std::filesystem::exists(candidate); ++n)
            candidate = dir + "-" + std::to_string(n);
        dir = candidate;
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    return dir;
}

int cmd_train(const CommonOpts& opts) {
    RunConfig cfg = make_config(opts);
    const TrainConfig tc = train_config_from(cfg);
    const auto pairs = cfg.has("pairs") ? cfg.get_list("pairs")
                                        : std::vector<std::string>{"maxpool_unpool"};
    if (pairs.size() != 1)
        throw ConfigError("train expects exactly one pair; use compare for several");
    const PairingRequest req = parse_pairing(pairs[0], cfg);

    const auto train_images = load_split(cfg, true);
    const auto test_images = load_split(cfg, false);
    const std::string dir = out_dir(cfg);

    const auto results = run_table3({req}, tc, train_images, test_images);
    const bool timing = cfg.get_bool("timing", false);
    const std::string csv = reports_to_csv({results[0].report}, timing);
    write_text(dir + "/report.csv", csv);
    write_text(dir + "/loss_curve.json", loss_curves_to_json({req}, results));
    save_tensors(dir + "/model", results[0].model->named_state());
    std::cout << csv;
    return kExitOk;
}

int cmd_eval(const CommonOpts& opts) {
    RunConfig cfg = make_config(opts);
    const TrainConfig tc = train_config_from(cfg);
    const auto pairs = cfg.has("pairs") ? cfg.get_list("pairs")
                                        : std::vector<std::string>{"maxpool_unpool"};
    if (pairs.size() != 1) throw ConfigError("eval expects exactly one pair");
    const PairingRequest req = parse_pairing(pairs[0], cfg);

    std::vector<Tensor<float>> test_images = load_split(cfg, false);
    if (tc.eval_subset > 0 && tc.eval_subset < static_cast<int>(test_images.size()))
        test_images.resize(static_cast<std::size_t>(tc.eval_subset));

    Rng rng(tc.seed);
    ReconNet net(ReconNetSpec{req.pair, req.indexnet}, rng);
    load_tensors(cfg.get("out_dir", "out") + "/model", net.named_state());
    ReconReport report = evaluate(net, test_images, tc.batch_size);
    report.variant = variant_label(req);
    report.epochs = 0;
    report.seed = tc.seed;
    std::cout << reports_to_csv({report}, false);
    return kExitOk;
}

int cmd_compare(const CommonOpts& opts, const std::vector<std::string>& pair_flags) {
    RunConfig cfg = make_config(opts);
    const TrainConfig tc = train_config_from(cfg);

    std::vector<std::string> tokens = pair_flags;
    if (tokens.empty() && cfg.has("pairs")) tokens = cfg.get_list("pairs");
    std::vector<PairingRequest> pairings;
    if (tokens.empty()) {
        pairings = default_pairings();
    } else {
        for (const auto& t : tokens) pairings.push_back(parse_pairing(t, cfg));
    }

    const auto train_images = load_split(cfg, true);
    const auto test_images = load_split(cfg, false);
    const std::string dir = out_dir(cfg);

    auto results = run_table3(pairings, tc, train_images, test_images);
    std::vector<ReconReport> reports;
    for (const auto& r : results) reports.push_back(r.report);
    const std::string csv = reports_to_csv(reports, cfg.get_bool("timing", false));
    write_text(dir + "/table3.csv", csv);
    write_text(dir + "/loss_curves.json", loss_curves_to_json(pairings, results));
    write_reconstruction_grid(dir + "/reconstructions.png", test_images, results,
                              static_cast<int>(cfg.get_int("grid_images", 8)));
    std::cout << csv;
    return kExitOk;
}

int print_gradchecks(const std::vector<GradCheckResult>& results) {
    bool all_pass = true;
    std::printf("%-40s %14s %8s  %s\n", "case", "max_rel_err", "checked", "result");
    for (const auto& r : results) {
        std::printf("%-40s %14.3e %8lld  %s\n", r.name.c_str(), r.max_rel_err,
                    static_cast<long long>(r.checked), r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitVerification;
}

int cmd_gradcheck(bool all, const std::string& one_case, const std::string& family,
                  const std::string& variant) {
    std::vector<GradCheckResult> results;
    if (!one_case.empty()) {
        results.push_back(run_gradcheck_case(one_case));
        return print_gradchecks(results);
    }
    if (all || family.empty()) {
        return print_gradchecks(run_all_gradchecks());
    }
    // Selected family: every primitive case plus the matching indexnet cases.
    const auto fam = family_from_name(family);
    if (!fam) throw ConfigError("unknown family '" + family + "'");
    for (const auto& name : gradcheck_case_names()) {
        if (name.rfind("indexnet_", 0) == 0) {
            const std::string want_prefix = "indexnet_" + family + "_";
            if (name.rfind(want_prefix, 0) != 0) continue;
            if (!variant.empty() && name != want_prefix + variant) continue;
        }
        results.push_back(run_gradcheck_case(name));
    }
    return print_gradchecks(results);
}

int cmd_params(const std::string& family, const std::string& variant, int k, int channels,
               bool all) {
    auto print_row = [k, channels](Family f, const std::string& var) {
        IndexNetConfig cfg;
        cfg.family = f;
        if (!apply_variant(cfg, var))
            throw ConfigError("unknown variant '" + var + "' (linear, nl, nl_c)");
        cfg.k = k;
        cfg.channels = channels;
        std::printf("%-24s %-8s k=%d channels=%-4d params=%-10lld formula=%s\n",
                    family_name(f), var.c_str(), k, channels,
                    static_cast<long long>(indexnet_param_count(cfg)),
                    indexnet_param_formula(cfg).c_str());
    };
    if (all) {
        for (Family f : {Family::HIN, Family::O2O_Modelwise, Family::O2O_SharedStagewise,
                         Family::O2O_UnsharedStagewise, Family::M2O})
            for (const char* var : {"linear", "nl", "nl_c"}) print_row(f, var);
        return kExitOk;
    }
    const auto fam = family_from_name(family);
    if (!fam) throw ConfigError("unknown family '" + family + "'");
    print_row(*fam, variant);
    return kExitOk;
}

int cmd_fetch_data(const CommonOpts& opts, std::string mirror, std::string dest,
                   bool synthetic, int synth_train, int synth_test) {
    RunConfig cfg = make_config(opts);
    if (dest.empty()) dest = cfg.get("dataset_dir", "data");
    if (mirror.empty()) mirror = cfg.get("mirror_url", kDefaultMirror);

    if (synthetic) {
        std::error_code ec;
        std::filesystem::create_directories(dest, ec);
        // Stand-in corpus under the canonical file names so the other
        // commands pick it up without extra configuration.
        write_idx_images(dest + "/train-images-idx3-ubyte.gz",
                         make_synthetic_images(synth_train, 7));
        write_idx_images(dest + "/t10k-images-idx3-ubyte.gz",
                         make_synthetic_images(synth_test, 8));
        std::cout << "wrote synthetic dataset to " << dest << " (" << synth_train << "+"
                  << synth_test << " images)\n";
        return kExitOk;
    }
    fetch_dataset(mirror, dest);
    std::cout << "dataset verified in " << dest << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"index-guided sampling workbench"};
    app.require_subcommand(1);

    CommonOpts train_opts, eval_opts, compare_opts, fetch_opts;
    std::vector<std::string> compare_pairs;
    bool gc_all = false;
    std::string gc_case, gc_family, gc_variant, gc_precision = "f64";
    std::string p_family, p_variant = "linear";
    int p_k = 2, p_channels = 32;
    bool p_all = false;
    std::string fetch_mirror, fetch_dest;
    bool fetch_synth = false;
    int fetch_synth_train = 6000, fetch_synth_test = 1000;

    auto* train = app.add_subcommand("train", "train one pairing and write artifacts");
    add_common(train, train_opts);
    auto* eval = app.add_subcommand("eval", "evaluate a saved model");
    add_common(eval, eval_opts);
    auto* compare = app.add_subcommand("compare", "train and tabulate sampler pairings");
    add_common(compare, compare_opts);
    compare->add_option("--pairs", compare_pairs,
                        "pairings, e.g. maxpool_unpool ip_iu:m2o_nl_c")
        ->take_all();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gradcheck->add_flag("--all", gc_all, "run every registered case");
    gradcheck->add_option("--case", gc_case, "run one case by name");
    gradcheck->add_option("--family", gc_family, "indexnet family to check");
    gradcheck->add_option("--variant", gc_variant, "linear, nl or nl_c");
    gradcheck->add_option("--precision", gc_precision, "f64 (the only supported mode)");

    auto* params = app.add_subcommand("params", "parameter counts and formulas");
    params->add_option("--family", p_family, "indexnet family");
    params->add_option("--variant", p_variant, "linear, nl or nl_c");
    params->add_option("--k", p_k, "region size")->check(CLI::PositiveNumber);
    params->add_option("--channels", p_channels, "feature channels")
        ->check(CLI::PositiveNumber);
    params->add_flag("--all", p_all, "print every family/variant row");

    auto* fetch = app.add_subcommand("fetch-data", "download and verify the dataset");
    add_common(fetch, fetch_opts);
    fetch->add_option("--mirror", fetch_mirror, "mirror base URL");
    fetch->add_option("--dest", fetch_dest, "destination directory");
    fetch->add_flag("--synthetic", fetch_synth,
                    "write a deterministic synthetic stand-in dataset instead");
    fetch->add_option("--synthetic-train", fetch_synth_train, "synthetic training images");
    fetch->add_option("--synthetic-test", fetch_synth_test, "synthetic test images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train) return cmd_train(train_opts);
        if (*eval) return cmd_eval(eval_opts);
        if (*compare) return cmd_compare(compare_opts, compare_pairs);
        if (*gradcheck) {
            if (gc_precision != "f64")
                throw ConfigError("gradcheck runs in f64 only (got '" + gc_precision + "')");
            return cmd_gradcheck(gc_all, gc_case, gc_family, gc_variant);
        }
        if (*params) {
            if (!p_all && p_family.empty())
                throw ConfigError("params needs --family (or --all)");
            return cmd_params(p_family, p_variant, p_k, p_channels, p_all);
        }
        if (*fetch)
            return cmd_fetch_data(fetch_opts, fetch_mirror, fetch_dest, fetch_synth,
                                  fetch_synth_train, fetch_synth_test);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitVerification;
    }
    return kExitConfig;
}
