#include "modit/cli.hpp"

#include <iostream>

#include <CLI11.hpp>

namespace modit {

namespace {

// --seed overrides every seed-bearing key so one flag pins a whole run.
void apply_overrides(RunConfig& cfg, bool have_seed, long long seed,
                     const std::string& precision) {
    if (have_seed) {
        cfg.set("train.seed", std::to_string(seed));
        cfg.set("sampler.seed", std::to_string(seed));
        cfg.set("data.seed", std::to_string(seed));
    }
    if (!precision.empty()) cfg.set("precision", precision);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"conditional diffusion transformer over expression-coefficient sequences"};
    app.require_subcommand(1);

    std::string config_path;
    std::string precision;
    long long seed = 0;
    bool have_seed = false;

    auto add_common = [&](CLI::App* sub, bool config_required = true) {
        auto* opt = sub->add_option("--config", config_path, "run configuration file");
        if (config_required) opt->required();
        sub->add_option("--precision", precision, "override precision (f32|f64)")
            ->check(CLI::IsMember({"f32", "f64"}));
        sub->add_option("--seed", seed, "override all seeds")->each([&](const std::string&) {
            have_seed = true;
        });
    };

    std::string out_path, data_path, ckpt_path, resume_path, metrics_path;
    std::string generated_path, reference_path, spec_path;
    int pair_index = 0;

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen);
    gen->add_option("--out", out_path, "output dataset path")->required();

    CLI::App* train = app.add_subcommand("train", "train the denoiser");
    add_common(train);
    train->add_option("--data", data_path, "dataset path")->required();
    train->add_option("--out", out_path, "output checkpoint path")->required();
    train->add_option("--resume", resume_path, "checkpoint to resume from");
    train->add_option("--metrics", metrics_path, "metrics log path (default: <out>.metrics.tsv)");

    CLI::App* sampc = app.add_subcommand("sample", "generate sequences from a checkpoint");
    add_common(sampc);
    sampc->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    sampc->add_option("--data", data_path, "dataset supplying conditions")->required();
    sampc->add_option("--pair", pair_index, "pair index for conditions");
    sampc->add_option("--out", out_path, "output base path")->required();

    CLI::App* evalc = app.add_subcommand("eval", "compare two coefficient traces");
    evalc->add_option("--generated", generated_path, "generated trace")->required();
    evalc->add_option("--reference", reference_path, "reference trace")->required();
    evalc->add_option("--checkpoint", ckpt_path, "checkpoint holding a face basis (optional)");
    evalc->add_option("--out", out_path, "report path (default: stdout)");

    CLI::App* gradc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gradc);
    gradc->add_option("--out", out_path, "report path (default: stdout)");

    CLI::App* ablate = app.add_subcommand("ablate", "train and compare ablation variants");
    add_common(ablate);
    ablate->add_option("--spec", spec_path, "ablation spec file")->required();
    ablate->add_option("--data", data_path, "dataset path")->required();
    ablate->add_option("--out", out_path, "report path (default: stdout)");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return kExitOk;
        }
        std::cerr << "argument error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (evalc->parsed()) {
            cmd_eval(generated_path, reference_path, ckpt_path, out_path);
            return kExitOk;
        }
        RunConfig cfg = RunConfig::from_file(config_path);
        apply_overrides(cfg, have_seed, seed, precision);
        if (gen->parsed()) {
            cmd_gen_data(cfg, out_path);
        } else if (train->parsed()) {
            cmd_train(cfg, data_path, out_path, resume_path, metrics_path);
        } else if (sampc->parsed()) {
            cmd_sample(cfg, ckpt_path, data_path, pair_index, out_path);
        } else if (gradc->parsed()) {
            cfg.set("precision", "f64");  // finite differences need doubles
            return cmd_gradcheck(cfg, out_path);
        } else if (ablate->parsed()) {
            cmd_ablate(cfg, spec_path, data_path, out_path);
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace modit
