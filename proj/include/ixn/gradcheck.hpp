#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ixn/autodiff.hpp"

namespace ixn {

// Central-difference verification of the reverse-mode gradients, always in
// double precision. A case perturbs every element of every differentiable
// input by +/-step and compares the numeric quotient against the analytic
// gradient; the reported error is |a - n| / max(1, |a|, |n|).

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0;
    std::int64_t checked = 0;  // number of input elements compared
    bool pass = false;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTol = 1e-4;

/// Rebuilds the graph from scratch for every probe, so the builder must be a
/// pure function of the input tensors.
using GraphBuilder = std::function<Var<double>(std::vector<Var<double>>&)>;

GradCheckResult gradcheck(const std::string& name, std::vector<Tensor<double>> inputs,
                          const GraphBuilder& build, double step = kGradCheckStep,
                          double tol = kGradCheckTol);

/// Registered cases, one per differentiable primitive or composite.
std::vector<std::string> gradcheck_case_names();

/// Runs one registered case by name; throws ConfigError for unknown names.
GradCheckResult run_gradcheck_case(const std::string& name);

std::vector<GradCheckResult> run_all_gradchecks();

/// Negative control: an op whose backward is deliberately wrong; the returned
/// result must have pass == false, proving the checker can detect errors.
GradCheckResult run_corrupted_control();

}  // namespace ixn
