#include "ixn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <map>
#include <utility>

#include "ixn/guided.hpp"
#include "ixn/indexnet.hpp"
#include "ixn/ops.hpp"
#include "ixn/random.hpp"

namespace ixn {

GradCheckResult gradcheck(const std::string& name, std::vector<Tensor<double>> inputs,
                          const GraphBuilder& build, double step, double tol) {
    GradCheckResult res;
    res.name = name;

    // Analytic pass.
    std::vector<Var<double>> vars;
    vars.reserve(inputs.size());
    for (auto& t : inputs) vars.emplace_back(t, true);
    Var<double> loss = build(vars);
    backward(loss);

    auto eval = [&](const std::vector<Tensor<double>>& probe) {
        std::vector<Var<double>> v;
        v.reserve(probe.size());
        for (const auto& t : probe) v.emplace_back(t, false);
        return build(v).value()[0];
    };

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor<double>& grad =
            vars[i].has_grad() ? vars[i].grad() : Tensor<double>(inputs[i].shape());
        for (std::int64_t e = 0; e < inputs[i].numel(); ++e) {
            const double orig = inputs[i][e];
            inputs[i][e] = orig + step;
            const double lp = eval(inputs);
            inputs[i][e] = orig - step;
            const double lm = eval(inputs);
            inputs[i][e] = orig;
            const double numeric = (lp - lm) / (2 * step);
            const double analytic = grad[e];
            const double rel = std::abs(analytic - numeric) /
                               std::max({1.0, std::abs(analytic), std::abs(numeric)});
            res.max_rel_err = std::max(res.max_rel_err, rel);
            ++res.checked;
        }
    }
    res.pass = res.max_rel_err < tol;
    return res;
}

namespace {

Tensor<double> uniform(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    return random_uniform<double>(s, rng, lo, hi);
}

/// Pushes values near a kink (0 for relu, ties for pooling) away from it so
/// the finite-difference probes stay on one linear piece.
Tensor<double> away_from_zero(Tensor<double> t, double margin = 0.05) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (std::abs(t[i]) < margin) t[i] += t[i] < 0 ? -margin : margin;
    return t;
}

/// Projects a tensor output to a scalar with fixed pseudo-random positive
/// weights, so every output element influences the loss distinctly.
Var<double> project(const Var<double>& out, std::uint64_t seed) {
    return sum(mul(out, Var<double>(uniform(out.shape(), seed, 0.5, 1.5), false)));
}

using CaseFn = std::function<GradCheckResult()>;

GradCheckResult check_indexnet(const std::string& name, IndexNetConfig cfg,
                               Shape input_shape, std::uint64_t seed) {
    // Prototype instance fixes the parameter shapes; each probe rebuilds the
    // net and overwrites its parameters from the checked inputs.
    Rng proto_rng(seed);
    IndexNet<double> proto(cfg, proto_rng, "gc");
    std::vector<Tensor<double>> inputs = {uniform(input_shape, seed + 1)};
    for (auto* p : proto.parameters())
        inputs.push_back(uniform(p->tensor().shape(), seed + 2 + inputs.size(), -0.5, 0.5));

    auto build = [cfg, seed](std::vector<Var<double>>& v) {
        Rng rng(seed);
        IndexNet<double> net(cfg, rng, "gc");
        auto params = net.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->var = v[i + 1];
        IndexMaps<double> maps = net.forward(v[0], true);
        return add(project(maps.encoder_index, seed + 100),
                   project(maps.decoder_index, seed + 101));
    };
    return gradcheck(name, std::move(inputs), build);
}

const std::map<std::string, CaseFn>& cases() {
    static const std::map<std::string, CaseFn> reg = [] {
        std::map<std::string, CaseFn> m;

        m["add"] = [] {
            return gradcheck("add", {uniform({1, 2, 4, 4}, 1), uniform({1, 2, 4, 4}, 2)},
                             [](auto& v) { return project(add(v[0], v[1]), 3); });
        };
        m["mul"] = [] {
            return gradcheck("mul", {uniform({1, 2, 4, 4}, 4), uniform({1, 2, 4, 4}, 5)},
                             [](auto& v) { return project(mul(v[0], v[1]), 6); });
        };
        m["scale"] = [] {
            return gradcheck("scale", {uniform({1, 3, 4, 4}, 7)},
                             [](auto& v) { return project(scale(v[0], 1.7), 8); });
        };
        m["add_bias"] = [] {
            return gradcheck("add_bias", {uniform({2, 3, 4, 4}, 9), uniform({1, 3, 1, 1}, 10)},
                             [](auto& v) { return project(add_bias(v[0], v[1]), 11); });
        };
        m["relu"] = [] {
            return gradcheck("relu", {away_from_zero(uniform({1, 2, 4, 4}, 12))},
                             [](auto& v) { return project(relu(v[0]), 13); });
        };
        m["sigmoid"] = [] {
            return gradcheck("sigmoid", {uniform({1, 2, 4, 4}, 14)},
                             [](auto& v) { return project(sigmoid(v[0]), 15); });
        };
        m["conv2d_s1p1"] = [] {
            return gradcheck("conv2d_s1p1",
                             {uniform({1, 2, 4, 4}, 16), uniform({3, 2, 3, 3}, 17)},
                             [](auto& v) { return project(conv2d(v[0], v[1], 1, 1), 18); });
        };
        m["conv2d_s2p0"] = [] {
            return gradcheck("conv2d_s2p0",
                             {uniform({2, 2, 4, 4}, 19), uniform({3, 2, 2, 2}, 20)},
                             [](auto& v) { return project(conv2d(v[0], v[1], 2, 0), 21); });
        };
        m["conv2d_groups"] = [] {
            return gradcheck("conv2d_groups",
                             {uniform({1, 4, 4, 4}, 22), uniform({4, 2, 2, 2}, 23)},
                             [](auto& v) { return project(conv2d(v[0], v[1], 2, 0, 2), 24); });
        };
        m["transposed_conv2d"] = [] {
            return gradcheck("transposed_conv2d",
                             {uniform({1, 2, 2, 2}, 25), uniform({2, 3, 2, 2}, 26)},
                             [](auto& v) { return project(transposed_conv2d(v[0], v[1], 2), 27); });
        };
        m["batch_norm"] = [] {
            return gradcheck(
                "batch_norm",
                {uniform({2, 3, 4, 4}, 28), uniform({1, 3, 1, 1}, 29, 0.7, 1.3),
                 uniform({1, 3, 1, 1}, 30, -0.3, 0.3)},
                [](auto& v) {
                    Tensor<double> rm(Shape{1, 3, 1, 1}, 0.0), rv(Shape{1, 3, 1, 1}, 1.0);
                    return project(batch_norm(v[0], v[1], v[2], rm, rv, true), 31);
                });
        };
        m["region_softmax"] = [] {
            return gradcheck("region_softmax", {uniform({1, 2, 4, 4}, 32)},
                             [](auto& v) { return project(region_softmax(v[0], 2), 33); });
        };
        m["avg_pool"] = [] {
            return gradcheck("avg_pool", {uniform({1, 3, 4, 4}, 34)},
                             [](auto& v) { return project(avg_pool(v[0], 2, 2), 35); });
        };
        m["max_pool_unpool"] = [] {
            return gradcheck("max_pool_unpool", {uniform({1, 2, 4, 4}, 36)},
                             [](auto& v) {
                                 auto [pooled, argmax] = max_pool_with_argmax(v[0], 2, 2);
                                 Var<double> up = max_unpool(pooled, argmax, v[0].shape());
                                 return project(up, 37);
                             });
        };
        m["nearest_upsample"] = [] {
            return gradcheck("nearest_upsample", {uniform({1, 2, 3, 3}, 38)},
                             [](auto& v) { return project(nearest_upsample(v[0], 2), 39); });
        };
        m["bilinear_upsample"] = [] {
            return gradcheck("bilinear_upsample", {uniform({1, 2, 3, 3}, 40)},
                             [](auto& v) { return project(bilinear_upsample(v[0], 2), 41); });
        };
        m["depth_to_space"] = [] {
            return gradcheck("depth_to_space", {uniform({1, 8, 2, 2}, 42)},
                             [](auto& v) { return project(depth_to_space(v[0], 2), 43); });
        };
        m["space_to_depth"] = [] {
            return gradcheck("space_to_depth", {uniform({1, 2, 4, 4}, 44)},
                             [](auto& v) { return project(space_to_depth(v[0], 2), 45); });
        };
        m["interleave_windows"] = [] {
            return gradcheck("interleave_windows",
                             {uniform({1, 2, 2, 2}, 46), uniform({1, 2, 2, 2}, 47),
                              uniform({1, 2, 2, 2}, 48), uniform({1, 2, 2, 2}, 49)},
                             [](auto& v) {
                                 std::vector<Var<double>> cols(v.begin(), v.end());
                                 return project(interleave_windows(cols, 2), 50);
                             });
        };
        m["expand_channels"] = [] {
            return gradcheck("expand_channels", {uniform({1, 1, 4, 4}, 51)},
                             [](auto& v) { return project(expand_channels(v[0], 3), 52); });
        };
        m["reshape"] = [] {
            return gradcheck("reshape", {uniform({1, 4, 2, 2}, 53)},
                             [](auto& v) { return project(reshape(v[0], {2, 2, 2, 2}), 54); });
        };
        m["sum"] = [] {
            return gradcheck("sum", {uniform({1, 2, 3, 3}, 55)},
                             [](auto& v) { return sum(v[0]); });
        };
        m["mean"] = [] {
            return gradcheck("mean", {uniform({1, 2, 3, 3}, 56)},
                             [](auto& v) { return mean(v[0]); });
        };
        m["l1_loss"] = [] {
            // Keep pred and target apart so the sign subgradient is stable.
            Tensor<double> target = uniform({1, 2, 4, 4}, 57);
            Tensor<double> pred = target;
            Tensor<double> off = uniform(pred.shape(), 58, 0.1, 0.5);
            for (std::int64_t i = 0; i < pred.numel(); ++i)
                pred[i] += (i % 2 == 0 ? off[i] : -off[i]);
            return gradcheck("l1_loss", {pred},
                             [target](auto& v) { return l1_loss(v[0], target); });
        };
        m["l2_loss"] = [] {
            Tensor<double> target = uniform({1, 2, 4, 4}, 59);
            return gradcheck("l2_loss", {uniform({1, 2, 4, 4}, 60)},
                             [target](auto& v) { return l2_loss(v[0], target); });
        };
        m["indexed_pool"] = [] {
            return gradcheck("indexed_pool",
                             {uniform({1, 3, 4, 4}, 61), uniform({1, 3, 4, 4}, 62, 0.1, 0.9)},
                             [](auto& v) { return project(indexed_pool(v[0], v[1], 2), 63); });
        };
        m["indexed_pool_holistic"] = [] {
            return gradcheck("indexed_pool_holistic",
                             {uniform({1, 3, 4, 4}, 64), uniform({1, 1, 4, 4}, 65, 0.1, 0.9)},
                             [](auto& v) { return project(indexed_pool(v[0], v[1], 2), 66); });
        };
        m["indexed_upsample"] = [] {
            return gradcheck("indexed_upsample",
                             {uniform({1, 3, 2, 2}, 67), uniform({1, 3, 4, 4}, 68, 0.1, 0.9)},
                             [](auto& v) { return project(indexed_upsample(v[0], v[1], 2), 69); });
        };

        // All family/variant combinations (5 families x linear/nl/nl_c).
        std::uint64_t family_seed = 70;
        for (Family f : {Family::HIN, Family::O2O_Modelwise, Family::O2O_SharedStagewise,
                         Family::O2O_UnsharedStagewise, Family::M2O}) {
            for (auto [nl, ctx] : std::initializer_list<std::pair<bool, bool>>{
                     {false, false}, {true, false}, {true, true}}) {
                IndexNetConfig cfg;
                cfg.family = f;
                cfg.nonlinear = nl;
                cfg.context = ctx;
                cfg.channels = 2;
                const std::string name =
                    std::string("indexnet_") + family_name(f) + "_" + variant_name(cfg);
                const std::uint64_t seed = family_seed++;
                m[name] = [name, cfg, seed] {
                    return check_indexnet(name, cfg, Shape{1, 2, 4, 4}, seed);
                };
            }
        }

        auto add_norm = [&m](const std::string& name, Normalization n, std::uint64_t seed) {
            m["normalize_" + name] = [name, n, seed] {
                IndexNetConfig cfg;
                cfg.normalization = n;
                cfg.k = 2;
                return gradcheck("normalize_" + name, {uniform({1, 2, 4, 4}, seed)},
                                 [cfg, seed](auto& v) {
                                     IndexMaps<double> maps = normalize_index(v[0], cfg);
                                     return add(project(maps.encoder_index, seed + 1),
                                                project(maps.decoder_index, seed + 2));
                                 });
            };
        };
        add_norm("sigmoid_softmax_enc", Normalization::SigmoidSoftmaxEnc, 80);
        add_norm("sigmoid_sigmoid", Normalization::SigmoidSigmoid, 83);
        add_norm("softmax_softmax", Normalization::SoftmaxSoftmax, 86);
        add_norm("softmax_sigmoid_enc", Normalization::SoftmaxSigmoidEnc, 89);

        return m;
    }();
    return reg;
}

}  // namespace

std::vector<std::string> gradcheck_case_names() {
    std::vector<std::string> names;
    for (const auto& [name, fn] : cases()) names.push_back(name);
    return names;
}

GradCheckResult run_gradcheck_case(const std::string& name) {
    const auto it = cases().find(name);
    if (it == cases().end()) throw ConfigError("unknown gradcheck case '" + name + "'");
    return it->second();
}

GradCheckResult run_corrupted_control() {
    // y = 2x forward, but the backward claims dy/dx = 3.
    auto corrupt_double = [](const Var<double>& x) {
        Tensor<double> out = x.value();
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= 2.0;
        auto xn = x.node();
        return make_op<double>(std::move(out), {xn}, [xn](Node<double>& self) {
            if (!xn->requires_grad) return;
            auto& g = xn->ensure_grad();
            for (std::int64_t i = 0; i < g.numel(); ++i) g[i] += 3.0 * self.grad[i];
        });
    };
    return gradcheck("corrupted_control", {uniform({1, 2, 3, 3}, 99)},
                     [corrupt_double](auto& v) { return project(corrupt_double(v[0]), 100); });
}

std::vector<GradCheckResult> run_all_gradchecks() {
    std::vector<GradCheckResult> out;
    for (const auto& [name, fn] : cases()) out.push_back(fn());
    return out;
}

}  // namespace ixn
