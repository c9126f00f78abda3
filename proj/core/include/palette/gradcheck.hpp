#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "palette/tensor.hpp"

namespace palette {

// Central-difference gradient of a deterministic scalar function at p:
// (f(p + eps·e_i) − f(p − eps·e_i)) / (2·eps) per coordinate. p's storage is
// perturbed in place and restored, so closures holding the same handle see
// the perturbation. Non-finite evaluations name the coordinate.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor p,
                              double eps);

struct GradCheckEntry {
    std::string name;
    double rel_error = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool pass = true;
    double worst_rel_error = 0.0;
    std::string worst_name;

    std::string to_string() const;
};

// Compares reverse-mode gradients of loss_fn against central differences for
// each named parameter. Relative error per tensor is
// ‖g_ad − g_fd‖∞ / max(1e-8, ‖g_fd‖∞); the report passes iff all entries are
// below tol. Report-only: never throws on mismatch.
//
// eps <= 0 picks a per-tensor step balancing roundoff against truncation,
// eps_t ≈ cbrt(3·ulp·|f| / ‖g‖∞), clamped to [1e-6, 1e-2]. Gradients through
// attention scores are orders of magnitude smaller than through value paths,
// so no single step size serves every tensor.
GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<std::pair<std::string, Tensor>>& params,
                               double tol, double eps = 0.0);

}  // namespace palette
