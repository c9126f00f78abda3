#include "palette/optimizer.hpp"

#include <cmath>

#include "palette/errors.hpp"

namespace palette {

Adam::Adam(const std::vector<NamedParam>& params, const TrainRunConfig& cfg)
    : params_(&params),
      state_(params.size()),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      weight_decay_(cfg.weight_decay) {}

void Adam::step(const std::vector<int>& indices, double lr) {
    for (int idx : indices) {
        const NamedParam& p = (*params_)[static_cast<std::size_t>(idx)];
        Slot& s = state_[static_cast<std::size_t>(idx)];
        Tensor t = p.tensor;
        if (!t.has_grad()) {
            // Untouched this step (e.g. an adapter slot behind a layer mask):
            // no gradient, no update.
            continue;
        }
        auto& data = t.data();
        const auto& g = t.grad();
        if (s.m.empty()) {
            s.m.assign(data.size(), 0.0);
            s.v.assign(data.size(), 0.0);
        }
        ++s.t;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
        const bool decay = weight_decay_ > 0.0 && p.kind == ParamKind::kWeight;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double gi = g[i];
            if (!std::isfinite(gi)) {
                throw NumericError("adam: non-finite gradient in '" + p.name + "' at entry " +
                                   std::to_string(i));
            }
            // Decoupled decay sees the step's incoming value.
            if (decay) {
                data[i] -= lr * weight_decay_ * data[i];
            }
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace palette
