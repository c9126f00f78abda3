// palette — experiment CLI: parameter budgets, schedule previews, multi-task
// training, checkpoint evaluation, and gradient checks.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "palette/budget.hpp"
#include "palette/errors.hpp"
#include "palette/experiment.hpp"
#include "palette/scheduler.hpp"

namespace {

using namespace palette;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--override", args.overrides,
                    "config override, key.path=value (repeatable)");
    cmd->add_option("--seed", args.seeds, "seed list, overrides run.seeds")->delimiter(',');
    cmd->add_option("--out", args.out_dir, "output directory, overrides output_dir");
}

ExperimentConfig load_config(const CommonArgs& args) {
    ExperimentConfig cfg = load_experiment_config(args.config_path, args.overrides);
    if (!args.seeds.empty()) {
        cfg.run.seeds = args.seeds;
    }
    if (!args.out_dir.empty()) {
        cfg.output_dir = args.out_dir;
    }
    return cfg;
}

int cmd_params(const CommonArgs& args, double limit) {
    ExperimentConfig cfg = load_config(args);
    BudgetReport report = count_parameters(cfg.adapter, cfg.model,
                                           static_cast<int>(cfg.tasks.size()),
                                           cfg.head_outputs());
    std::cout << report.to_string();
    BudgetVerdict verdict = check_budget(report, limit);
    std::cout << verdict.to_string() << "\n";
    return kExitOk;
}

int cmd_schedule(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    const std::vector<long long> sizes = experiment_task_sizes(cfg);

    std::cout << "epoch,alpha";
    for (const auto& t : cfg.tasks) std::cout << ",p_" << t.spec.name;
    std::cout << "\n";
    char buf[40];
    auto print_row = [&](int epoch, double alpha) {
        const auto probs = sampling_probs(sizes, alpha);
        std::snprintf(buf, sizeof buf, "%.6f", alpha);
        std::cout << epoch << ',' << buf;
        for (double p : probs) {
            std::snprintf(buf, sizeof buf, "%.6f", p);
            std::cout << ',' << buf;
        }
        std::cout << "\n";
    };
    switch (cfg.sampler.strategy) {
        case SamplingStrategy::kAnnealed:
            for (int e = 1; e <= cfg.sampler.total_epochs; ++e) {
                print_row(e, anneal_alpha(e, cfg.sampler.total_epochs));
            }
            break;
        case SamplingStrategy::kAlpha:
            print_row(1, cfg.sampler.alpha);
            break;
        case SamplingStrategy::kRoundRobin:
            print_row(1, 0.0);
            break;
    }

    std::cout << "\nstep,lr\n";
    const long long total = cfg.run.total_steps;
    const long long stride = total >= 20 ? total / 20 : 1;
    for (long long s = 0; s <= total; s += stride) {
        std::snprintf(buf, sizeof buf, "%.10g", lr_at(s, cfg.run));
        std::cout << s << ',' << buf << "\n";
    }
    if (total % stride != 0) {
        std::snprintf(buf, sizeof buf, "%.10g", lr_at(total, cfg.run));
        std::cout << total << ',' << buf << "\n";
    }
    return kExitOk;
}

int cmd_train(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args);
    std::cout << "training " << cfg.tasks.size() << " task(s), adapter family "
              << family_name(cfg.adapter.family) << ", " << cfg.run.seeds.size()
              << " seed(s), output -> " << cfg.output_dir << "\n";
    ExperimentResult res = run_experiment(cfg, cfg.output_dir);
    char buf[64];
    for (const auto& run : res.runs) {
        std::snprintf(buf, sizeof buf, "%.4f", run.result.best_average);
        std::cout << "seed " << run.seed << ": best avg dev " << buf << " @ step "
                  << run.result.best_step << "\n";
    }
    for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%.4f +- %.4f", res.mean_per_task[t],
                      res.stderr_per_task[t]);
        std::cout << cfg.tasks[t].spec.name << " ("
                  << metric_name(cfg.tasks[t].spec.metric) << "): " << buf << "\n";
    }
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", res.mean_average, res.stderr_average);
    std::cout << "average: " << buf << "\n";
    return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
    ExperimentConfig cfg = load_config(args);
    const auto scores = evaluate_checkpoint(checkpoint, cfg);
    char buf[40];
    double sum = 0.0;
    for (std::size_t t = 0; t < scores.size(); ++t) {
        std::snprintf(buf, sizeof buf, "%.6f", scores[t]);
        std::cout << cfg.tasks[t].spec.name << ','
                  << metric_name(cfg.tasks[t].spec.metric) << ',' << buf << "\n";
        sum += scores[t];
    }
    std::snprintf(buf, sizeof buf, "%.6f", sum / static_cast<double>(scores.size()));
    std::cout << "average,score," << buf << "\n";
    return kExitOk;
}

int cmd_gradcheck(const CommonArgs& args, double tol, double eps, bool corrupt) {
    ExperimentConfig cfg = load_config(args);
    if (cfg.model.d_m > 32) {
        throw ConfigError("gradcheck: d_m must be <= 32 (finite differences over every "
                          "parameter) — shrink the model in the config");
    }
    bool all_pass = true;
    char buf[40];
    auto run_one = [&](const std::string& label, const AdapterSpec& spec) {
        GradCheckReport report = family_gradient_check(cfg.model, spec, tol, eps, corrupt);
        all_pass = all_pass && report.pass;
        std::snprintf(buf, sizeof buf, "%.3e", report.worst_rel_error);
        std::cout << (report.pass ? "pass  " : "FAIL  ") << label << "  worst " << buf << " ("
                  << report.worst_name << ")\n";
    };
    for (AdapterFamily f : gradcheck_families()) {
        run_one(family_name(f), small_family_spec(f, cfg.model));
    }
    // Serial composition goes through its own layer-norm path; check it too.
    AdapterSpec serial = small_family_spec(AdapterFamily::kPal, cfg.model);
    serial.composition = Composition::kSerial;
    run_one("pal(serial)", serial);
    if (!all_pass) {
        throw NumericError("gradcheck: at least one family exceeded tolerance " +
                           std::to_string(tol));
    }
    std::cout << "all families within " << tol << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"palette: multi-task encoder adapters, budgets, and training"};
    app.require_subcommand(1);

    CommonArgs params_args, schedule_args, train_args, eval_args, gradcheck_args;
    double limit = 1.13;
    std::string checkpoint;
    double tol = 1e-5, eps = 0.0;
    bool corrupt = false;

    CLI::App* params = app.add_subcommand("params", "parameter budget audit");
    add_common(params, params_args);
    params->add_option("--limit", limit, "budget ratio limit (default 1.13)");

    CLI::App* schedule = app.add_subcommand("schedule", "sampling/learning-rate preview");
    add_common(schedule, schedule_args);

    CLI::App* train = app.add_subcommand("train", "multi-task training");
    add_common(train, train_args);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on dev sets");
    add_common(eval, eval_args);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    add_common(gradcheck, gradcheck_args);
    gradcheck->add_option("--tol", tol, "relative-error tolerance");
    gradcheck->add_option("--eps", eps, "finite-difference step (0 = per-tensor auto)");
    gradcheck->add_flag("--corrupt", corrupt,
                        "flip one backward sign (negative control; must fail)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (params->parsed()) return cmd_params(params_args, limit);
        if (schedule->parsed()) return cmd_schedule(schedule_args);
        if (train->parsed()) return cmd_train(train_args);
        if (eval->parsed()) return cmd_eval(eval_args, checkpoint);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_args, tol, eps, corrupt);
    } catch (const palette::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const palette::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const palette::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::logic_error& e) {
        std::cerr << "internal consistency error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
