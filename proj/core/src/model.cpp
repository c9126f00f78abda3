#include "palette/model.hpp"

#include <stdexcept>

#include "palette/ops.hpp"
#include "palette/rng.hpp"

namespace palette {

namespace {
// Init stream ids: components draw independently so swapping the adapter
// family leaves encoder and head draws untouched.
constexpr std::uint64_t kEncoderStream = 0;
constexpr std::uint64_t kSharedPoolStream = 50;
constexpr std::uint64_t kAdapterStreamBase = 100;
constexpr std::uint64_t kHeadStreamBase = 100000;
}  // namespace

MultiTaskModel::MultiTaskModel(const ModelConfig& cfg, const AdapterSpec& spec,
                               const std::vector<TaskHeadSpec>& heads, std::uint64_t seed)
    : cfg_(cfg), spec_(spec) {
    cfg_.validate();
    spec_.validate(cfg_);
    cfg_.n_tasks = static_cast<int>(heads.size());
    head_specs_ = heads;

    Rng enc_rng = Rng::derive(seed, kEncoderStream);
    encoder_ = EncoderParams::init(cfg_, &enc_rng);

    for (std::size_t t = 0; t < heads.size(); ++t) {
        Rng a_rng = Rng::derive(seed, kAdapterStreamBase + t);
        adapters_.push_back(TaskAdapter::init(spec_, cfg_, &a_rng));
        Rng h_rng = Rng::derive(seed, kHeadStreamBase + t);
        heads_.push_back(
            TaskHead::init(cfg_, heads[t].n_outputs, heads[t].regression, &h_rng));
    }
    if (spec_.share_pooling && !heads_.empty()) {
        Rng p_rng = Rng::derive(seed, kSharedPoolStream);
        TaskHead proto = TaskHead::init(cfg_, 2, false, &p_rng);
        shared_pool_w_ = proto.pool_w;
        shared_pool_b_ = proto.pool_b;
        for (TaskHead& h : heads_) {
            h.pool_w = shared_pool_w_;  // aliases: one storage for all tasks
            h.pool_b = shared_pool_b_;
        }
    }
}

void MultiTaskModel::check_task(int task) const {
    if (task < 0 || task >= n_tasks()) {
        throw std::out_of_range("task index " + std::to_string(task) + " outside [0," +
                                std::to_string(n_tasks()) + ")");
    }
}

Tensor MultiTaskModel::encode_base(const std::vector<int>& token_ids,
                                   const std::vector<int>& segment_ids,
                                   const std::vector<std::uint8_t>& mask) {
    return encode(encoder_, cfg_, token_ids, segment_ids, mask);
}

Tensor MultiTaskModel::encode_task(int task, const std::vector<int>& token_ids,
                                   const std::vector<int>& segment_ids,
                                   const std::vector<std::uint8_t>& mask) {
    check_task(task);
    TaskAdapter& a = adapters_[static_cast<std::size_t>(task)];
    const AdapterSpec& spec = a.spec;

    LayerFn layer_fn;
    if (spec.is_within_layer()) {
        // slot = rank of the layer among adapted layers
        std::vector<int> slot_of_layer(static_cast<std::size_t>(cfg_.n_layers), -1);
        int slot = 0;
        for (int l = 0; l < cfg_.n_layers; ++l) {
            if (spec.layer_adapted(l)) slot_of_layer[static_cast<std::size_t>(l)] = slot++;
        }
        layer_fn = [this, &a, &spec, &mask, slot_of_layer](int layer, const Tensor& h,
                                                           const BertLayerParams& base) {
            const int s = slot_of_layer[static_cast<std::size_t>(layer)];
            if (s < 0) {
                return bert_layer(h, base, cfg_.n_heads, mask);
            }
            if (spec.family == AdapterFamily::kLhuc) {
                return lhuc_apply(bert_layer(h, base, cfg_.n_heads, mask),
                                  a.lhuc[static_cast<std::size_t>(s)]);
            }
            return spec.composition == Composition::kParallel
                       ? compose_parallel(h, base, cfg_.n_heads, mask, a, s)
                       : compose_serial(h, base, cfg_.n_heads, mask, a, s);
        };
    }
    Tensor h = encode(encoder_, cfg_, token_ids, segment_ids, mask, layer_fn);
    if (spec.family == AdapterFamily::kTopBertLayer) {
        for (const BertLayerParams& lp : a.top_bert) {
            h = bert_layer(h, lp, cfg_.n_heads, mask);
        }
    } else if (spec.is_top()) {
        h = add(h, top_stack_apply(h, a, mask));
    }
    return h;
}

Tensor MultiTaskModel::forward(int task, const std::vector<int>& token_ids,
                               const std::vector<int>& segment_ids,
                               const std::vector<std::uint8_t>& mask) {
    Tensor h = encode_task(task, token_ids, segment_ids, mask);
    return pool_and_predict(row(h, 0), heads_[static_cast<std::size_t>(task)]);
}

const std::vector<NamedParam>& MultiTaskModel::parameters() {
    if (!params_.empty()) return params_;
    auto push = [this](std::vector<int>& bucket) {
        return [this, &bucket](const std::string& name, Tensor& t, ParamKind kind) {
            bucket.push_back(static_cast<int>(params_.size()));
            params_.push_back({name, t, kind});
        };
    };
    encoder_.visit(push(encoder_indices_));
    if (spec_.share_pooling && shared_pool_w_.defined()) {
        // Shared pooling sits with the heads: frozen by freeze_task, not
        // freeze_base.
        auto fn = push(shared_head_indices_);
        fn("shared.pool_w", shared_pool_w_, ParamKind::kWeight);
        fn("shared.pool_b", shared_pool_b_, ParamKind::kBias);
    }
    task_indices_.resize(heads_.size());
    for (std::size_t t = 0; t < heads_.size(); ++t) {
        const std::string prefix = "task" + std::to_string(t);
        adapters_[t].visit(prefix + ".adapter", push(task_indices_[t]));
        heads_[t].visit(prefix + ".head", /*include_pooling=*/!spec_.share_pooling,
                        push(task_indices_[t]));
    }
    return params_;
}

std::vector<int> MultiTaskModel::trainable_indices(int task, bool freeze_base,
                                                   bool freeze_task) {
    check_task(task);
    parameters();
    std::vector<int> out;
    if (!freeze_base) {
        out.insert(out.end(), encoder_indices_.begin(), encoder_indices_.end());
    }
    if (!freeze_task) {
        out.insert(out.end(), shared_head_indices_.begin(), shared_head_indices_.end());
        const auto& ti = task_indices_[static_cast<std::size_t>(task)];
        out.insert(out.end(), ti.begin(), ti.end());
    }
    return out;
}

std::vector<std::vector<double>> MultiTaskModel::snapshot() {
    std::vector<std::vector<double>> snap;
    snap.reserve(parameters().size());
    for (const NamedParam& p : parameters()) {
        snap.push_back(p.tensor.data());
    }
    return snap;
}

void MultiTaskModel::restore(const std::vector<std::vector<double>>& snap) {
    const auto& ps = parameters();
    if (snap.size() != ps.size()) {
        throw std::invalid_argument("restore: snapshot has " + std::to_string(snap.size()) +
                                    " tensors, model has " + std::to_string(ps.size()));
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (snap[i].size() != ps[i].tensor.numel()) {
            throw std::invalid_argument("restore: size mismatch at " + ps[i].name);
        }
        const_cast<Tensor&>(ps[i].tensor).data() = snap[i];
    }
}

}  // namespace palette
