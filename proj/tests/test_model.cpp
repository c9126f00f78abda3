#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "palette/checkpoint.hpp"
#include "palette/errors.hpp"
#include "palette/model.hpp"
#include "palette/ops.hpp"
#include "palette/rng.hpp"

using namespace palette;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.d_m = 12;
    cfg.n_layers = 3;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.vocab_size = 14;
    cfg.max_seq_len = 10;
    return cfg;
}

std::vector<TaskHeadSpec> two_heads() { return {{2, false}, {1, true}}; }

std::string temp_ckpt() {
    static int counter = 0;
    return (std::filesystem::temp_directory_path() /
            ("palette_model_" + std::to_string(getpid()) + "_" + std::to_string(counter++) +
             ".ckpt"))
        .string();
}

struct SeqCase {
    std::vector<int> ids, segs;
};

SeqCase random_sequence(const ModelConfig& cfg, Rng& rng) {
    SeqCase s;
    const int l = 2 + rng.below(cfg.max_seq_len - 2);
    for (int i = 0; i < l; ++i) {
        s.ids.push_back(rng.below(cfg.vocab_size));
        s.segs.push_back(rng.below(cfg.n_segment_types));
    }
    return s;
}

AdapterSpec family_spec(AdapterFamily f) {
    AdapterSpec s;
    s.family = f;
    s.d_s = 6;
    s.n_heads_s = 2;
    s.inner_size = 9;
    s.n_top_layers = 2;
    s.share_pooling = false;
    return s;
}

}  // namespace

TEST_CASE("zero-decoder adapters reproduce the adapter-free model for every family") {
    ModelConfig cfg = small_config();
    const std::uint64_t seed = 314;
    MultiTaskModel plain(cfg, family_spec(AdapterFamily::kNone), two_heads(), seed);

    for (AdapterFamily f :
         {AdapterFamily::kPal, AdapterFamily::kPalUnshared, AdapterFamily::kLowRank,
          AdapterFamily::kFfnAdapter, AdapterFamily::kLhuc, AdapterFamily::kTopProjAttention,
          AdapterFamily::kTopProjFfn}) {
        MultiTaskModel adapted(cfg, family_spec(f), two_heads(), seed);
        Rng rng(1000 + static_cast<std::uint64_t>(f));
        for (int trial = 0; trial < 10; ++trial) {
            SeqCase s = random_sequence(cfg, rng);
            for (int task = 0; task < 2; ++task) {
                Tensor a = adapted.forward(task, s.ids, s.segs, {});
                Tensor b = plain.forward(task, s.ids, s.segs, {});
                REQUIRE(a.numel() == b.numel());
                for (std::size_t i = 0; i < a.numel(); ++i) {
                    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-9));
                }
            }
        }
    }
}

TEST_CASE("a full-width top layer is a genuine transform, not a perturbation") {
    ModelConfig cfg = small_config();
    const std::uint64_t seed = 17;
    MultiTaskModel plain(cfg, family_spec(AdapterFamily::kNone), two_heads(), seed);
    MultiTaskModel top(cfg, family_spec(AdapterFamily::kTopBertLayer), two_heads(), seed);
    Rng rng(2);
    SeqCase s = random_sequence(cfg, rng);
    Tensor a = top.encode_task(0, s.ids, s.segs, {});
    Tensor b = plain.encode_task(0, s.ids, s.segs, {});
    double diff = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff = std::max(diff, std::fabs(a.data()[i] - b.data()[i]));
    }
    CHECK(diff > 1e-6);
}

TEST_CASE("gradients from one task never touch another task's parameters") {
    ModelConfig cfg = small_config();
    AdapterSpec spec = family_spec(AdapterFamily::kPal);
    MultiTaskModel model(cfg, spec, two_heads(), 7);
    Rng rng(3);
    SeqCase s = random_sequence(cfg, rng);

    for (const NamedParam& p : model.parameters()) {
        const_cast<Tensor&>(p.tensor).zero_grad();
    }
    Tensor loss = cross_entropy_with_logits(model.forward(0, s.ids, s.segs, {}), 1);
    loss.backward();

    bool task0_has_grad = false;
    for (const NamedParam& p : model.parameters()) {
        const bool task1_param = p.name.rfind("task1.", 0) == 0;
        const bool task0_param = p.name.rfind("task0.", 0) == 0;
        if (task1_param) {
            if (p.tensor.has_grad()) {
                for (double g : p.tensor.node()->grad) CHECK(g == 0.0);
            }
        }
        if (task0_param && p.tensor.has_grad()) {
            for (double g : p.tensor.node()->grad) {
                if (g != 0.0) task0_has_grad = true;
            }
        }
    }
    CHECK(task0_has_grad);
}

TEST_CASE("shared pooling aliases one storage across heads") {
    ModelConfig cfg = small_config();
    AdapterSpec spec = family_spec(AdapterFamily::kPal);
    spec.share_pooling = true;
    MultiTaskModel model(cfg, spec, two_heads(), 11);
    CHECK(model.head(0).pool_w.same_storage(model.head(1).pool_w));
    CHECK(model.head(0).pool_b.same_storage(model.head(1).pool_b));

    Rng rng(4);
    SeqCase s = random_sequence(cfg, rng);
    Tensor before = model.forward(1, s.ids, s.segs, {});
    model.head(0).pool_w(0, 0) += 1.0;  // mutate through task 0's handle
    Tensor after = model.forward(1, s.ids, s.segs, {});
    double diff = 0.0;
    for (std::size_t i = 0; i < after.numel(); ++i) {
        diff = std::max(diff, std::fabs(after.data()[i] - before.data()[i]));
    }
    CHECK(diff > 0.0);

    // Only one pooling tensor in the registry, and exactly one per task when
    // pooling is per-task.
    int pool_entries = 0;
    for (const NamedParam& p : model.parameters()) {
        if (p.name.find("pool_w") != std::string::npos) pool_entries++;
    }
    CHECK(pool_entries == 1);

    AdapterSpec sep = family_spec(AdapterFamily::kPal);
    sep.share_pooling = false;
    MultiTaskModel model2(cfg, sep, two_heads(), 11);
    CHECK_FALSE(model2.head(0).pool_w.same_storage(model2.head(1).pool_w));
    pool_entries = 0;
    for (const NamedParam& p : model2.parameters()) {
        if (p.name.find("pool_w") != std::string::npos) pool_entries++;
    }
    CHECK(pool_entries == 2);
}

TEST_CASE("trainable index groups respect the freeze flags") {
    ModelConfig cfg = small_config();
    AdapterSpec spec = family_spec(AdapterFamily::kPal);
    spec.share_pooling = true;
    MultiTaskModel model(cfg, spec, two_heads(), 13);
    const auto& params = model.parameters();

    auto names_of = [&](const std::vector<int>& idx) {
        std::vector<std::string> names;
        for (int i : idx) names.push_back(params[static_cast<std::size_t>(i)].name);
        return names;
    };

    const auto all = model.trainable_indices(0, false, false);
    bool has_encoder = false, has_task0 = false, has_task1 = false, has_pool = false;
    for (const auto& n : names_of(all)) {
        has_encoder = has_encoder || n.rfind("encoder.", 0) == 0;
        has_task0 = has_task0 || n.rfind("task0.", 0) == 0;
        has_task1 = has_task1 || n.rfind("task1.", 0) == 0;
        has_pool = has_pool || n.rfind("shared.pool", 0) == 0;
    }
    CHECK(has_encoder);
    CHECK(has_task0);
    CHECK(has_pool);
    CHECK_FALSE(has_task1);

    const auto frozen_base = model.trainable_indices(0, true, false);
    for (const auto& n : names_of(frozen_base)) {
        CHECK(n.rfind("encoder.", 0) != 0);
    }
    CHECK_FALSE(frozen_base.empty());

    CHECK(model.trainable_indices(0, true, true).empty());
    CHECK_THROWS(model.trainable_indices(5, false, false));
}

TEST_CASE("checkpoints round-trip bit-exactly, vocabulary included") {
    ModelConfig cfg = small_config();
    AdapterSpec spec = family_spec(AdapterFamily::kFfnAdapter);
    MultiTaskModel model(cfg, spec, two_heads(), 2024);
    Vocab vocab = Vocab::closed(cfg.vocab_size - 4);

    const std::string path = temp_ckpt();
    save_checkpoint(path, model, &vocab);
    LoadedCheckpoint loaded = load_checkpoint(path);

    REQUIRE(loaded.model != nullptr);
    REQUIRE(loaded.vocab.has_value());
    CHECK(loaded.vocab->size() == vocab.size());
    for (int i = 0; i < vocab.size(); ++i) {
        CHECK(loaded.vocab->token(i) == vocab.token(i));
    }
    CHECK(loaded.model->n_tasks() == 2);
    CHECK(loaded.model->adapter_spec().family == AdapterFamily::kFfnAdapter);

    const auto& a = model.parameters();
    const auto& b = loaded.model->parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        REQUIRE(a[i].tensor.numel() == b[i].tensor.numel());
        const auto& da = a[i].tensor.data();
        const auto& db = b[i].tensor.data();
        for (std::size_t j = 0; j < da.size(); ++j) {
            CHECK(da[j] == db[j]);  // bitwise in double precision
        }
    }

    // Behaviourally identical too.
    Rng rng(5);
    SeqCase s = random_sequence(cfg, rng);
    Tensor ya = model.forward(0, s.ids, s.segs, {});
    Tensor yb = loaded.model->forward(0, s.ids, s.segs, {});
    for (std::size_t i = 0; i < ya.numel(); ++i) {
        CHECK(ya.data()[i] == yb.data()[i]);
    }
}

TEST_CASE("checkpoint loading rejects non-checkpoint files") {
    const std::string path = temp_ckpt();
    {
        std::ofstream f(path, std::ios::trunc);
        f << "not a checkpoint at all";
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
    CHECK_THROWS_AS(load_checkpoint(path + ".does_not_exist"), IoError);
}

TEST_CASE("snapshot and restore bring a model back exactly") {
    ModelConfig cfg = small_config();
    MultiTaskModel model(cfg, family_spec(AdapterFamily::kPal), two_heads(), 33);
    const auto snap = model.snapshot();
    Rng rng(6);
    SeqCase s = random_sequence(cfg, rng);
    Tensor before = model.forward(0, s.ids, s.segs, {});

    // Scribble on everything, then restore.
    for (const NamedParam& p : model.parameters()) {
        for (double& v : const_cast<Tensor&>(p.tensor).data()) v += 0.25;
    }
    Tensor scribbled = model.forward(0, s.ids, s.segs, {});
    double diff = 0.0;
    for (std::size_t i = 0; i < scribbled.numel(); ++i) {
        diff = std::max(diff, std::fabs(scribbled.data()[i] - before.data()[i]));
    }
    CHECK(diff > 0.0);

    model.restore(snap);
    Tensor after = model.forward(0, s.ids, s.segs, {});
    for (std::size_t i = 0; i < after.numel(); ++i) {
        CHECK(after.data()[i] == before.data()[i]);
    }
}

TEST_CASE("same seed, same init; different seed, different init") {
    ModelConfig cfg = small_config();
    AdapterSpec spec = family_spec(AdapterFamily::kPal);
    MultiTaskModel m1(cfg, spec, two_heads(), 42);
    MultiTaskModel m2(cfg, spec, two_heads(), 42);
    MultiTaskModel m3(cfg, spec, two_heads(), 43);
    const auto s1 = m1.snapshot();
    const auto s2 = m2.snapshot();
    const auto s3 = m3.snapshot();
    bool any_diff_43 = false;
    for (std::size_t i = 0; i < s1.size(); ++i) {
        CHECK(s1[i] == s2[i]);
        any_diff_43 = any_diff_43 || (s1[i] != s3[i]);
    }
    CHECK(any_diff_43);
}

TEST_CASE("layer masks leave unmasked layers identical to the base pass") {
    ModelConfig cfg = small_config();
    AdapterSpec spec = family_spec(AdapterFamily::kPal);
    spec.layer_mask = {0, 0, 1};  // adapt the final layer only
    const std::uint64_t seed = 55;
    MultiTaskModel masked(cfg, spec, two_heads(), seed);

    // Give the adapter a live decoder so the final layer genuinely changes.
    Rng rng(7);
    for (Tensor& t : masked.adapter(0).dec_w) rng.fill_normal(t.data(), 0.0, 0.3);
    MultiTaskModel plain(cfg, family_spec(AdapterFamily::kNone), two_heads(), seed);

    SeqCase s = random_sequence(cfg, rng);
    Tensor a = masked.encode_task(0, s.ids, s.segs, {});
    Tensor b = plain.encode_task(0, s.ids, s.segs, {});
    double diff = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        diff = std::max(diff, std::fabs(a.data()[i] - b.data()[i]));
    }
    CHECK(diff > 1e-9);  // the adapted final layer moved
    CHECK(masked.adapter(0).attn.size() == 1);  // one slot only
}
