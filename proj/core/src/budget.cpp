#include "palette/budget.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace palette {

std::string group_digits(long long v) {
    const bool neg = v < 0;
    std::string digits = std::to_string(neg ? -v : v);
    std::string out;
    out.reserve(digits.size() + digits.size() / 3 + 1);
    const std::size_t n = digits.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && (n - i) % 3 == 0) out.push_back(',');
        out.push_back(digits[i]);
    }
    return neg ? "-" + out : out;
}

namespace {

struct ClosedForm {
    long long proj = 0;  // encoder/decoder weights
    long long g = 0;     // per-layer transform weights
    long long total() const { return proj + g; }
};

ClosedForm closed_form_per_task(const AdapterSpec& spec, const ModelConfig& cfg) {
    ClosedForm cf;
    const long long d_m = cfg.d_m;
    const long long d_s = spec.d_s;
    const long long inner = spec.inner_size;
    const long long act = spec.adapted_layer_count(cfg);
    const long long top = spec.resolved_top_layers();
    switch (spec.family) {
        case AdapterFamily::kNone:
            break;
        case AdapterFamily::kPal:
        case AdapterFamily::kPalUnshared:
            cf.proj = (spec.share_proj_across_layers ? 1 : act) * 2 * d_m * d_s;
            cf.g = act * 3 * d_s * d_s;  // no output mix
            break;
        case AdapterFamily::kLowRank:
            cf.proj = (spec.share_proj_across_layers ? 1 : act) * 2 * d_m * d_s;
            break;
        case AdapterFamily::kFfnAdapter:
            cf.proj = (spec.share_proj_across_layers ? 1 : act) * 2 * d_m * d_s;
            cf.g = act * 2 * d_s * inner;
            break;
        case AdapterFamily::kLhuc:
            cf.g = act * d_m;
            break;
        case AdapterFamily::kTopProjAttention:
            cf.proj = 2 * d_m * d_s;
            cf.g = top * 4 * d_s * d_s;  // the top stack keeps the output mix
            break;
        case AdapterFamily::kTopProjFfn:
            cf.proj = 2 * d_m * d_s;
            cf.g = top * 2 * d_s * inner;
            break;
        case AdapterFamily::kTopBertLayer:
            cf.g = top * (4 * d_m * d_m + 2 * d_m * cfg.d_ff);
            break;
    }
    return cf;
}

}  // namespace

BudgetReport count_parameters(const AdapterSpec& spec_in, const ModelConfig& cfg, int n_tasks,
                              const std::vector<int>& head_outputs) {
    if (n_tasks < 0) {
        throw std::invalid_argument("count_parameters: n_tasks must be >= 0");
    }
    if (!head_outputs.empty() && static_cast<int>(head_outputs.size()) != n_tasks) {
        throw std::invalid_argument("count_parameters: head_outputs size " +
                                    std::to_string(head_outputs.size()) +
                                    " does not match n_tasks " + std::to_string(n_tasks));
    }
    AdapterSpec spec = spec_in;
    spec.validate(cfg);

    BudgetReport r;
    r.family = family_name(spec.family);
    r.n_tasks = n_tasks;

    const EncoderParamCount base = count_encoder_params(cfg);
    r.base_total = base.total();
    r.base_embeddings = base.embeddings;

    // Tensor-size walk over an instantiated (shape-only) adapter.
    long long walk_weights = 0, walk_aux = 0;
    if (spec.family != AdapterFamily::kNone && n_tasks > 0) {
        TaskAdapter probe = TaskAdapter::init(spec, cfg, nullptr);
        probe.visit("probe", [&](const std::string&, Tensor& t, ParamKind kind) {
            if (kind == ParamKind::kWeight) {
                walk_weights += static_cast<long long>(t.numel());
            } else {
                walk_aux += static_cast<long long>(t.numel());
            }
        });
    }

    const ClosedForm cf = closed_form_per_task(spec, cfg);
    r.proj_weights_per_task = cf.proj;
    r.g_weights_per_task = cf.g;
    r.formula_per_task = cf.total();
    r.adapter_weights_per_task = (n_tasks > 0) ? walk_weights : 0;
    r.adapter_aux_per_task = (n_tasks > 0) ? walk_aux : 0;
    r.formula_matches_walk = (n_tasks == 0) || (walk_weights == cf.total());
    if (!r.formula_matches_walk) {
        throw std::logic_error("count_parameters: closed form " + group_digits(cf.total()) +
                               " disagrees with tensor walk " + group_digits(walk_weights) +
                               " for family " + r.family);
    }

    r.adapter_weights_total = static_cast<long long>(n_tasks) * r.adapter_weights_per_task;
    r.adapter_aux_total = static_cast<long long>(n_tasks) * r.adapter_aux_per_task;

    const long long d_m = cfg.d_m;
    for (int t = 0; t < n_tasks; ++t) {
        const long long k = head_outputs.empty() ? 2 : head_outputs[static_cast<std::size_t>(t)];
        r.head_weights_total += k * d_m;
        r.head_aux_total += k;
    }
    if (!spec.share_pooling && n_tasks > 1) {
        r.pooling_extra_total = static_cast<long long>(n_tasks - 1) * d_m * d_m;
        r.head_weights_total += r.pooling_extra_total;
        r.head_aux_total += static_cast<long long>(n_tasks - 1) * d_m;
    }

    const double base_d = static_cast<double>(r.base_total);
    const double add_w =
        static_cast<double>(r.adapter_weights_total + r.head_weights_total);
    const double add_full = add_w + static_cast<double>(r.adapter_aux_total + r.head_aux_total);
    r.ratio = (base_d + add_w) / base_d;
    r.ratio_full = (base_d + add_full) / base_d;
    const double core = base_d - static_cast<double>(r.base_embeddings);
    r.ratio_excl_embeddings = (core + add_w) / core;
    return r;
}

std::string BudgetReport::to_string() const {
    std::ostringstream os;
    char buf[64];
    os << "adapter family: " << family << "  (T=" << n_tasks << ")\n";
    os << "  base model:           " << group_digits(base_total) << "  ("
       << group_digits(base_embeddings) << " in embedding tables)\n";
    os << "  per task:             " << group_digits(adapter_weights_per_task)
       << " adapter weights  =  " << group_digits(proj_weights_per_task) << " projections + "
       << group_digits(g_weights_per_task) << " layer transforms  (+"
       << group_digits(adapter_aux_per_task) << " bias/layer-norm)\n";
    os << "  closed form:          " << group_digits(formula_per_task) << "/task  "
       << (formula_matches_walk ? "== tensor walk" : "!= tensor walk") << "\n";
    os << "  adapters total:       " << group_digits(adapter_weights_total) << "  (+"
       << group_digits(adapter_aux_total) << " bias/layer-norm)\n";
    os << "  heads/pooling:        " << group_digits(head_weights_total) << " weights  ("
       << group_digits(pooling_extra_total) << " in extra pooling layers, +"
       << group_digits(head_aux_total) << " bias)\n";
    std::snprintf(buf, sizeof buf, "%.4f", ratio);
    os << "  ratio to base:        " << buf;
    std::snprintf(buf, sizeof buf, "%.4f", ratio_full);
    os << "  (with bias terms " << buf << ")\n";
    std::snprintf(buf, sizeof buf, "%.2f", ratio_excl_embeddings);
    os << "  excluding embeddings: " << buf << "x\n";
    return os.str();
}

BudgetVerdict check_budget(const BudgetReport& report, double limit_ratio) {
    BudgetVerdict v;
    v.limit_ratio = limit_ratio;
    v.ratio = report.ratio;
    v.reported_ratio = std::round(report.ratio * 100.0) / 100.0;
    v.pass = v.reported_ratio <= limit_ratio + 1e-9;
    v.headroom = limit_ratio + 0.005 - report.ratio;
    v.adapter_total = report.adapter_weights_total;
    v.adapter_per_task = report.adapter_weights_per_task;
    return v;
}

std::string BudgetVerdict::to_string() const {
    std::ostringstream os;
    char buf[64];
    os << group_digits(adapter_per_task) << "/task; " << group_digits(adapter_total)
       << " total; ";
    std::snprintf(buf, sizeof buf, "%.2f", reported_ratio);
    os << "ratio " << buf << " vs limit ";
    std::snprintf(buf, sizeof buf, "%.2f", limit_ratio);
    os << buf << "; " << (pass ? "PASS" : "FAIL");
    return os.str();
}

}  // namespace palette
