#include "palette/gradcheck.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace palette {

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, Tensor p,
                              double eps) {
    if (!p.defined()) {
        throw std::invalid_argument("finite_difference_grad: undefined parameter tensor");
    }
    if (!(eps > 0.0)) {
        throw std::invalid_argument("finite_difference_grad: eps must be positive");
    }
    NoGradGuard no_grad;
    Tensor out = Tensor::zeros(p.shape());
    auto& pd = p.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const double saved = pd[i];
        pd[i] = saved + eps;
        const double fp = f(p);
        pd[i] = saved - eps;
        const double fm = f(p);
        pd[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("finite_difference_grad: non-finite evaluation at coordinate " +
                                     std::to_string(i));
        }
        out.data()[i] = (fp - fm) / (2.0 * eps);
    }
    return out;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    for (const auto& e : entries) {
        os << (e.pass ? "  ok   " : "  FAIL ") << e.name << "  rel_error=" << e.rel_error
           << "\n";
    }
    os << (pass ? "PASS" : "FAIL") << "  worst " << worst_name << " (" << worst_rel_error
       << ")\n";
    return os.str();
}

GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<std::pair<std::string, Tensor>>& params,
                               double tol, double eps) {
    for (auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    Tensor loss = loss_fn();
    loss.backward();
    const double loss_scale = std::max(1.0, std::fabs(loss.value()));

    // Snapshot reverse-mode gradients before finite differences touch anything.
    std::vector<std::vector<double>> ad_grads;
    ad_grads.reserve(params.size());
    for (auto& [name, p] : params) {
        if (p.has_grad()) {
            ad_grads.push_back(p.node()->grad);
        } else {
            ad_grads.emplace_back(p.numel(), 0.0);
        }
    }

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& name = params[pi].first;
        Tensor p = params[pi].second;
        double eps_t = eps;
        if (!(eps_t > 0.0)) {
            double g_inf = 0.0;
            for (double g : ad_grads[pi]) g_inf = std::max(g_inf, std::fabs(g));
            eps_t = std::cbrt(3.0 * 1e-16 * loss_scale / std::max(g_inf, 1e-10));
            eps_t = std::min(1e-2, std::max(1e-6, eps_t));
        }
        Tensor fd = finite_difference_grad(
            [&loss_fn](const Tensor&) { return loss_fn().value(); }, p, eps_t);
        double max_diff = 0.0, max_fd = 0.0;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            max_diff = std::max(max_diff, std::fabs(ad_grads[pi][i] - fd.data()[i]));
            max_fd = std::max(max_fd, std::fabs(fd.data()[i]));
        }
        GradCheckEntry entry;
        entry.name = name;
        entry.rel_error = max_diff / std::max(1e-8, max_fd);
        entry.pass = entry.rel_error < tol;
        if (entry.rel_error >= report.worst_rel_error) {
            report.worst_rel_error = entry.rel_error;
            report.worst_name = name;
        }
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace palette
