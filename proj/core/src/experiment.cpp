#include "palette/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json_serde.hpp"
#include "palette/checkpoint.hpp"
#include "palette/errors.hpp"
#include "palette/ops.hpp"

namespace palette {

namespace {

using serde::json;

TaskConfig task_config_from_json(const json& j) {
    TaskConfig tc;
    const std::string source = j.value("source", std::string("synth"));
    if (source == "synth") {
        serde::check_keys(j, {"name", "source", "family", "size", "dev_size", "seed", "metric"},
                          "task");
        if (auto it = j.find("family"); it != j.end()) {
            tc.synth.family = synth_family_from_name(it->get<std::string>());
        } else {
            throw ConfigError("synthetic task needs a 'family'");
        }
        serde::get_if_present(j, "size", tc.synth.size);
        serde::get_if_present(j, "dev_size", tc.synth.dev_size);
        serde::get_if_present(j, "seed", tc.synth.seed);
        tc.is_synth = true;
        // Spec fields come from the family; name/metric may be overridden.
        tc.spec = synth_task_spec(tc.synth.family, tc.synth.size);
        if (auto it = j.find("name"); it != j.end()) tc.spec.name = it->get<std::string>();
        if (auto it = j.find("metric"); it != j.end()) {
            tc.spec.metric = metric_from_name(it->get<std::string>());
        }
    } else if (source == "tsv") {
        serde::check_keys(j,
                          {"name", "source", "train_path", "dev_path", "input_kind",
                           "output_kind", "n_classes", "metric"},
                          "task");
        tc.is_synth = false;
        tc.spec.name = j.value("name", std::string());
        serde::get_if_present(j, "train_path", tc.tsv.train_path);
        serde::get_if_present(j, "dev_path", tc.tsv.dev_path);
        if (tc.tsv.train_path.empty()) {
            throw ConfigError("tsv task '" + tc.spec.name + "' needs a 'train_path'");
        }
        const std::string ik = j.value("input_kind", std::string("single"));
        if (ik == "single") {
            tc.spec.input_kind = InputKind::kSingle;
        } else if (ik == "pair") {
            tc.spec.input_kind = InputKind::kPair;
        } else {
            throw ConfigError("task input_kind must be 'single' or 'pair', got '" + ik + "'");
        }
        const std::string ok = j.value("output_kind", std::string("classes"));
        if (ok == "classes") {
            tc.spec.output_kind = OutputKind::kClasses;
        } else if (ok == "regression") {
            tc.spec.output_kind = OutputKind::kRegression;
            tc.spec.metric = TaskMetric::kPearson;
        } else {
            throw ConfigError("task output_kind must be 'classes' or 'regression', got '" + ok +
                              "'");
        }
        serde::get_if_present(j, "n_classes", tc.spec.n_classes);
        if (auto it = j.find("metric"); it != j.end()) {
            tc.spec.metric = metric_from_name(it->get<std::string>());
        }
    } else {
        throw ConfigError("task source must be 'synth' or 'tsv', got '" + source + "'");
    }
    return tc;
}

json task_config_to_json(const TaskConfig& tc) {
    json j;
    j["name"] = tc.spec.name;
    if (tc.is_synth) {
        j["source"] = "synth";
        j["family"] = synth_family_name(tc.synth.family);
        j["size"] = tc.synth.size;
        j["dev_size"] = tc.synth.dev_size;
        j["seed"] = tc.synth.seed;
    } else {
        j["source"] = "tsv";
        j["train_path"] = tc.tsv.train_path;
        if (!tc.tsv.dev_path.empty()) j["dev_path"] = tc.tsv.dev_path;
        j["input_kind"] = tc.spec.input_kind == InputKind::kPair ? "pair" : "single";
        j["output_kind"] =
            tc.spec.output_kind == OutputKind::kRegression ? "regression" : "classes";
        j["n_classes"] = tc.spec.n_classes;
    }
    j["metric"] = metric_name(tc.spec.metric);
    return j;
}

SamplerConfig sampler_from_json(const json& j) {
    serde::check_keys(j, {"strategy", "alpha", "total_epochs", "epoch_steps"}, "sampler");
    SamplerConfig s;
    if (auto it = j.find("strategy"); it != j.end()) {
        s.strategy = strategy_from_name(it->get<std::string>());
    }
    serde::get_if_present(j, "alpha", s.alpha);
    serde::get_if_present(j, "total_epochs", s.total_epochs);
    serde::get_if_present(j, "epoch_steps", s.epoch_steps);
    return s;
}

json sampler_to_json(const SamplerConfig& s) {
    return json{{"strategy", strategy_name(s.strategy)},
                {"alpha", s.alpha},
                {"total_epochs", s.total_epochs},
                {"epoch_steps", s.epoch_steps}};
}

TrainRunConfig run_from_json(const json& j) {
    serde::check_keys(j,
                      {"total_steps", "batch_size", "max_seq_len", "warmup_frac", "eval_every",
                       "base_lr", "beta1", "beta2", "weight_decay", "adam_eps", "freeze_base",
                       "freeze_task", "seeds"},
                      "run");
    TrainRunConfig r;
    serde::get_if_present(j, "total_steps", r.total_steps);
    serde::get_if_present(j, "batch_size", r.batch_size);
    serde::get_if_present(j, "max_seq_len", r.max_seq_len);
    serde::get_if_present(j, "warmup_frac", r.warmup_frac);
    serde::get_if_present(j, "eval_every", r.eval_every);
    serde::get_if_present(j, "base_lr", r.base_lr);
    serde::get_if_present(j, "beta1", r.beta1);
    serde::get_if_present(j, "beta2", r.beta2);
    serde::get_if_present(j, "weight_decay", r.weight_decay);
    serde::get_if_present(j, "adam_eps", r.adam_eps);
    serde::get_if_present(j, "freeze_base", r.freeze_base);
    serde::get_if_present(j, "freeze_task", r.freeze_task);
    serde::get_if_present(j, "seeds", r.seeds);
    return r;
}

json run_to_json(const TrainRunConfig& r) {
    return json{{"total_steps", r.total_steps},
                {"batch_size", r.batch_size},
                {"max_seq_len", r.max_seq_len},
                {"warmup_frac", r.warmup_frac},
                {"eval_every", r.eval_every},
                {"base_lr", r.base_lr},
                {"beta1", r.beta1},
                {"beta2", r.beta2},
                {"weight_decay", r.weight_decay},
                {"adam_eps", r.adam_eps},
                {"freeze_base", r.freeze_base},
                {"freeze_task", r.freeze_task},
                {"seeds", r.seeds}};
}

}  // namespace

TaskDataset TaskConfig::load(int vocab_size) const {
    TaskDataset ds;
    if (is_synth) {
        ds = synth_generate(synth.family, synth.size, vocab_size, synth.seed, synth.dev_size);
        ds.spec.name = spec.name;
        ds.spec.metric = spec.metric;
    } else {
        ds = tsv.dev_path.empty() ? load_tsv(tsv.train_path, spec)
                                  : load_tsv(tsv.train_path, tsv.dev_path, spec);
    }
    ds.spec.validate();
    return ds;
}

void ExperimentConfig::validate() {
    model.validate();
    adapter.validate(model);
    run.validate();
    if (tasks.empty()) {
        throw ConfigError("config: at least one task required");
    }
    for (auto& t : tasks) {
        t.spec.validate();
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        for (std::size_t j = i + 1; j < tasks.size(); ++j) {
            if (tasks[i].spec.name == tasks[j].spec.name) {
                throw ConfigError("config: duplicate task name '" + tasks[i].spec.name + "'");
            }
        }
    }
    if (run.max_seq_len > model.max_seq_len) {
        throw ConfigError("config: run.max_seq_len " + std::to_string(run.max_seq_len) +
                          " exceeds model.max_seq_len " + std::to_string(model.max_seq_len));
    }
    if (sampler.strategy == SamplingStrategy::kAnnealed && sampler.total_epochs == 0) {
        // One schedule epoch per epoch_steps block of the run.
        const long long e = (run.total_steps + sampler.epoch_steps - 1) / sampler.epoch_steps;
        sampler.total_epochs = static_cast<int>(std::max<long long>(2, e));
    }
    model.n_tasks = static_cast<int>(tasks.size());
}

std::vector<TaskHeadSpec> ExperimentConfig::head_specs() const {
    std::vector<TaskHeadSpec> heads;
    for (const auto& t : tasks) {
        TaskHeadSpec h;
        h.regression = t.spec.output_kind == OutputKind::kRegression;
        h.n_outputs = h.regression ? 1 : t.spec.n_classes;
        heads.push_back(h);
    }
    return heads;
}

std::vector<int> ExperimentConfig::head_outputs() const {
    std::vector<int> out;
    for (const auto& h : head_specs()) out.push_back(h.n_outputs);
    return out;
}

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    for (const std::string& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError("override must look like key.path=value, got '" + ov + "'");
        }
        std::string path = "/" + ov.substr(0, eq);
        std::replace(path.begin(), path.end(), '.', '/');
        const std::string raw = ov.substr(eq + 1);
        json value = json::parse(raw, nullptr, /*allow_exceptions=*/false);
        if (value.is_discarded()) value = raw;  // bare strings pass through
        try {
            j[json::json_pointer(path)] = value;
        } catch (const json::exception& e) {
            throw ConfigError("override '" + ov + "': " + e.what());
        }
    }
    serde::check_keys(j, {"model", "adapter", "sampler", "run", "tasks", "output_dir"},
                      "config");
    ExperimentConfig cfg;
    if (auto it = j.find("model"); it != j.end()) cfg.model = serde::model_config_from_json(*it);
    if (auto it = j.find("adapter"); it != j.end()) {
        cfg.adapter = serde::adapter_spec_from_json(*it);
    }
    if (auto it = j.find("sampler"); it != j.end()) cfg.sampler = sampler_from_json(*it);
    if (auto it = j.find("run"); it != j.end()) cfg.run = run_from_json(*it);
    if (auto it = j.find("tasks"); it != j.end()) {
        if (!it->is_array()) throw ConfigError("config: 'tasks' must be an array");
        for (const auto& tj : *it) cfg.tasks.push_back(task_config_from_json(tj));
    }
    serde::get_if_present(j, "output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) {
        throw IoError("config: cannot open '" + path + "'");
    }
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_experiment_config(text, overrides);
}

std::string resolved_config_json(const ExperimentConfig& cfg) {
    json j;
    j["model"] = serde::model_config_to_json(cfg.model);
    j["adapter"] = serde::adapter_spec_to_json(cfg.adapter);
    j["sampler"] = sampler_to_json(cfg.sampler);
    j["run"] = run_to_json(cfg.run);
    json tasks = json::array();
    for (const auto& t : cfg.tasks) tasks.push_back(task_config_to_json(t));
    j["tasks"] = std::move(tasks);
    j["output_dir"] = cfg.output_dir;
    return j.dump(2) + "\n";
}

std::vector<TaskDataset> load_task_datasets(const ExperimentConfig& cfg) {
    std::vector<TaskDataset> out;
    for (const auto& t : cfg.tasks) {
        out.push_back(t.load(cfg.model.vocab_size));
    }
    return out;
}

std::vector<long long> experiment_task_sizes(const ExperimentConfig& cfg) {
    std::vector<long long> sizes;
    for (const auto& t : cfg.tasks) {
        if (t.is_synth) {
            sizes.push_back(t.synth.size);
        } else {
            sizes.push_back(static_cast<long long>(read_tsv(t.tsv.train_path, t.spec).size()));
        }
    }
    return sizes;
}

Vocab build_experiment_vocab(const ExperimentConfig& cfg,
                             const std::vector<TaskDataset>& datasets) {
    const int capacity = cfg.model.vocab_size;
    bool any_synth = false;
    for (const auto& t : cfg.tasks) any_synth = any_synth || t.is_synth;
    Vocab v = any_synth ? Vocab::closed(capacity - 4) : Vocab();
    for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
        if (cfg.tasks[i].is_synth) continue;
        auto scan = [&](const std::vector<Example>& exs) {
            for (const Example& ex : exs) {
                for (const auto& tok : ex.text_a) {
                    if (v.size() < capacity) v.add(tok);
                }
                for (const auto& tok : ex.text_b) {
                    if (v.size() < capacity) v.add(tok);
                }
            }
        };
        scan(datasets[i].train);
        scan(datasets[i].dev);
    }
    return v;
}

namespace {

void summary_stats(const std::vector<double>& xs, double& mean, double& se) {
    const double n = static_cast<double>(xs.size());
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() < 2) {
        se = 0.0;
        return;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    auto datasets = load_task_datasets(cfg);
    const Vocab vocab = build_experiment_vocab(cfg, datasets);
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) {
            throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
        }
        std::ofstream rc(out_dir + "/resolved_config.json", std::ios::trunc);
        rc << resolved_config_json(cfg);
        if (!rc) throw IoError("cannot write resolved config in '" + out_dir + "'");
    }

    ExperimentResult res;
    for (std::uint64_t seed : cfg.run.seeds) {
        MultiTaskModel model(cfg.model, cfg.adapter, cfg.head_specs(), seed);
        std::optional<MetricsWriter> mw;
        if (!out_dir.empty()) {
            mw.emplace(out_dir + "/metrics_seed" + std::to_string(seed) + ".csv");
        }
        SeedRun run;
        run.seed = seed;
        run.result = train(model, datasets, vocab, cfg.sampler, cfg.run, seed,
                           mw ? &*mw : nullptr);
        if (!out_dir.empty()) {
            model.restore(run.result.best_snapshot);
            save_checkpoint(out_dir + "/checkpoint_seed" + std::to_string(seed) + ".ckpt",
                            model, &vocab);
        }
        res.runs.push_back(std::move(run));
    }

    const std::size_t n_tasks = cfg.tasks.size();
    res.mean_per_task.assign(n_tasks, 0.0);
    res.stderr_per_task.assign(n_tasks, 0.0);
    bool have_scores = true;
    for (const auto& r : res.runs) {
        have_scores = have_scores && r.result.best_per_task.size() == n_tasks;
    }
    if (have_scores && !res.runs.empty()) {
        for (std::size_t t = 0; t < n_tasks; ++t) {
            std::vector<double> xs;
            for (const auto& r : res.runs) xs.push_back(r.result.best_per_task[t]);
            summary_stats(xs, res.mean_per_task[t], res.stderr_per_task[t]);
        }
        std::vector<double> avgs;
        for (const auto& r : res.runs) avgs.push_back(r.result.best_average);
        summary_stats(avgs, res.mean_average, res.stderr_average);
    }

    if (!out_dir.empty() && have_scores) {
        std::ofstream f(out_dir + "/summary.csv", std::ios::trunc);
        f << "task,metric,mean,stderr";
        for (const auto& r : res.runs) f << ",seed" << r.seed;
        f << "\n";
        char buf[40];
        auto emit = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            f << buf;
        };
        for (std::size_t t = 0; t < n_tasks; ++t) {
            f << cfg.tasks[t].spec.name << ',' << metric_name(cfg.tasks[t].spec.metric) << ',';
            emit(res.mean_per_task[t]);
            f << ',';
            emit(res.stderr_per_task[t]);
            for (const auto& r : res.runs) {
                f << ',';
                emit(r.result.best_per_task[t]);
            }
            f << "\n";
        }
        f << "average,score,";
        emit(res.mean_average);
        f << ',';
        emit(res.stderr_average);
        for (const auto& r : res.runs) {
            f << ',';
            emit(r.result.best_average);
        }
        f << "\n";
        if (!f) throw IoError("cannot write summary in '" + out_dir + "'");
    }
    return res;
}

std::vector<double> evaluate_checkpoint(const std::string& checkpoint_path,
                                        const ExperimentConfig& cfg) {
    LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
    MultiTaskModel& model = *ckpt.model;
    if (model.n_tasks() != static_cast<int>(cfg.tasks.size())) {
        throw ConfigError("eval: checkpoint has " + std::to_string(model.n_tasks()) +
                          " tasks, config has " + std::to_string(cfg.tasks.size()));
    }
    const auto want = cfg.head_specs();
    for (int t = 0; t < model.n_tasks(); ++t) {
        const auto& hs = model.head_specs()[static_cast<std::size_t>(t)];
        if (hs.n_outputs != want[static_cast<std::size_t>(t)].n_outputs ||
            hs.regression != want[static_cast<std::size_t>(t)].regression) {
            throw ConfigError("eval: head mismatch on task '" +
                              cfg.tasks[static_cast<std::size_t>(t)].spec.name + "'");
        }
    }
    auto datasets = load_task_datasets(cfg);
    const Vocab vocab =
        ckpt.vocab ? *ckpt.vocab : build_experiment_vocab(cfg, datasets);
    std::vector<double> scores;
    for (int t = 0; t < model.n_tasks(); ++t) {
        const auto& ds = datasets[static_cast<std::size_t>(t)];
        auto dev = encode_dataset(ds.dev, vocab, cfg.run.max_seq_len);
        scores.push_back(evaluate_task(model, t, dev, ds.spec));
    }
    return scores;
}

std::vector<AdapterFamily> gradcheck_families() {
    return {AdapterFamily::kNone,          AdapterFamily::kPal,
            AdapterFamily::kPalUnshared,   AdapterFamily::kLowRank,
            AdapterFamily::kFfnAdapter,    AdapterFamily::kLhuc,
            AdapterFamily::kTopProjAttention, AdapterFamily::kTopProjFfn,
            AdapterFamily::kTopBertLayer};
}

AdapterSpec small_family_spec(AdapterFamily family, const ModelConfig& model_cfg) {
    AdapterSpec s;
    s.family = family;
    s.n_heads_s = 2;
    s.d_s = std::max(2, model_cfg.d_m / 2);
    s.d_s -= s.d_s % s.n_heads_s;
    s.inner_size = 12;
    s.n_top_layers = 2;
    s.share_pooling = false;
    return s;
}

GradCheckReport family_gradient_check(const ModelConfig& model_cfg, AdapterSpec spec,
                                      double tol, double eps, bool corrupt) {
    if (model_cfg.d_m > 32) {
        throw ConfigError("gradient check: keep d_m <= 32 so finite differences stay tractable");
    }
    // Two tasks so the pair-input path and a second head are exercised.
    std::vector<TaskHeadSpec> heads{{2, false}, {1, true}};
    MultiTaskModel model(model_cfg, spec, heads, /*seed=*/99);

    const std::vector<int> ids{Vocab::kCls, 4, 5, 6, Vocab::kSep, 4, Vocab::kSep};
    const std::vector<int> segs{0, 0, 0, 0, 0, 1, 1};

    auto loss_fn = [&]() {
        Tensor cls_loss = cross_entropy_with_logits(model.forward(0, ids, segs, {}), 1);
        Tensor reg_loss = squared_error(model.forward(1, ids, segs, {}), 0.5);
        Tensor loss = add(cls_loss, reg_loss);
        if (corrupt) {
            // Negative control: identity forward, sign-flipped backward.
            loss = Tensor::make_op(loss.shape(), loss.data(), {loss}, [](detail::Node& o) {
                Tensor& p = o.parents[0];
                if (!p.requires_grad()) return;
                p.grad()[0] -= o.grad[0];
            });
        }
        return loss;
    };

    std::vector<std::pair<std::string, Tensor>> params;
    for (const NamedParam& p : model.parameters()) {
        params.emplace_back(p.name, p.tensor);
    }
    return gradient_check(loss_fn, params, tol, eps);
}

}  // namespace palette
