#include <benchmark/benchmark.h>

#include "palette/encoder.hpp"
#include "palette/experiment.hpp"
#include "palette/ops.hpp"
#include "palette/rng.hpp"

namespace {

using namespace palette;

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    rng.fill_normal(t.data(), 0.0, 1.0);
    return t;
}

void BM_matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a = random_tensor({n, n}, rng);
    Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n) * n * n);
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(64)->Arg(128)->Arg(256);

ModelConfig desk_config() {
    ModelConfig cfg;
    cfg.d_m = 64;
    cfg.n_layers = 4;
    cfg.n_heads = 4;
    cfg.d_ff = 256;
    cfg.vocab_size = 32;
    cfg.max_seq_len = 32;
    return cfg;
}

void BM_bert_layer_forward(benchmark::State& state) {
    const int l = static_cast<int>(state.range(0));
    ModelConfig cfg = desk_config();
    Rng rng(2);
    BertLayerParams layer = BertLayerParams::init(cfg, &rng);
    Tensor h = random_tensor({l, cfg.d_m}, rng);
    NoGradGuard no_grad;
    for (auto _ : state) {
        Tensor out = bert_layer(h, layer, cfg.n_heads, {});
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_bert_layer_forward)->Arg(8)->Arg(16)->Arg(32);

void BM_forward_backward(benchmark::State& state) {
    ModelConfig cfg = desk_config();
    AdapterSpec spec;
    spec.family = AdapterFamily::kPal;
    spec.d_s = 16;
    spec.n_heads_s = 2;
    MultiTaskModel model(cfg, spec, {{2, false}}, 3);
    const std::vector<int> ids{1, 4, 5, 6, 7, 8, 9, 2};
    const std::vector<int> segs(ids.size(), 0);
    for (auto _ : state) {
        for (const NamedParam& p : model.parameters()) {
            const_cast<Tensor&>(p.tensor).zero_grad();
        }
        Tensor loss = cross_entropy_with_logits(model.forward(0, ids, segs, {}), 1);
        loss.backward();
        benchmark::DoNotOptimize(loss.value());
    }
}
BENCHMARK(BM_forward_backward);

void BM_pal_adapter_forward(benchmark::State& state) {
    ModelConfig cfg = desk_config();
    AdapterSpec spec;
    spec.family = AdapterFamily::kPal;
    spec.d_s = 16;
    spec.n_heads_s = 2;
    Rng rng(4);
    TaskAdapter adapter = TaskAdapter::init(spec, cfg, &rng);
    Tensor h = random_tensor({16, cfg.d_m}, rng);
    NoGradGuard no_grad;
    for (auto _ : state) {
        Tensor out = ts_apply(h, adapter, 0, {});
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_pal_adapter_forward);

}  // namespace

BENCHMARK_MAIN();
