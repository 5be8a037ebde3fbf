#include "modit/ablation.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "modit/metrics.hpp"
#include "modit/pipeline.hpp"

namespace modit {

namespace {

const std::vector<std::string>& known_variants() {
    static const std::vector<std::string> v = {"full", "no_beta0", "no_bias_injection",
                                               "no_temporal_revision", "no_velocity_loss"};
    return v;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

// Per-variant, per-seed training + sampling, in the configured precision.
template <class T>
AblationRun run_variant(const RunConfig& cfg, const std::string& variant, uint64_t seed,
                        const std::vector<DataPair>& pairs) {
    RunConfig run = cfg;
    const std::string toggle = ablation_toggle(variant);
    if (!toggle.empty()) {
        const size_t eq = toggle.find('=');
        run.set(toggle.substr(0, eq), toggle.substr(eq + 1));
    }
    run.set("train.seed", std::to_string(seed));

    Trainer<T> tr = make_trainer<T>(run);
    const std::vector<TrainItem<T>> items = items_from_pairs<T>(pairs);
    const long long steps = run.get_int("train.steps");
    for (long long s = 0; s < steps; ++s) tr.train_step(items);

    SamplerConfig sc = sampler_config<T>(run);
    AblationRun result;
    result.variant = variant;
    result.seed = seed;
    for (size_t i = 0; i < pairs.size(); ++i) {
        SamplerConfig psc = sc;
        // sampling noise shared across variants for a given (seed, pair)
        psc.seed = derive_seed(seed, 0xAB1A, i);
        Matrix<T> gen = sample(items[i].beta0, items[i].audio, tr.params, tr.sched, tr.masks, psc);
        result.mse += static_cast<double>(sequence_mse(gen, items[i].x0));
        result.jitter += static_cast<double>(jitter_metric(gen));
    }
    result.mse /= static_cast<double>(pairs.size());
    result.jitter /= static_cast<double>(pairs.size());
    return result;
}

struct Stats {
    double mean = 0.0, sd = 0.0;
};

Stats mean_sd(const std::vector<double>& xs) {
    Stats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

}  // namespace

std::string ablation_toggle(const std::string& variant) {
    if (variant == "full") return "";
    if (variant == "no_beta0") return "model.use_beta0=false";
    if (variant == "no_bias_injection") return "phase.enabled=false";
    if (variant == "no_temporal_revision") return "model.temporal_revision=false";
    if (variant == "no_velocity_loss") return "train.lambda_v=0";
    throw ConfigError("unknown ablation variant '" + variant + "'");
}

AblationSpec parse_ablation_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open ablation spec " + path);
    AblationSpec spec;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("ablation spec: expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "variants") {
            spec.variants = split_list(value);
        } else if (key == "seeds") {
            for (const auto& tok : split_list(value))
                spec.seeds.push_back(std::strtoull(tok.c_str(), nullptr, 10));
        } else {
            throw ConfigError("ablation spec: unknown key '" + key + "'");
        }
    }
    if (spec.variants.empty()) throw ConfigError("ablation spec: no variants");
    if (spec.seeds.empty()) throw ConfigError("ablation spec: no seeds");
    for (const auto& v : spec.variants) ablation_toggle(v);  // validates names
    if (std::find(spec.variants.begin(), spec.variants.end(), "full") == spec.variants.end())
        throw ConfigError("ablation spec: the 'full' variant is required as the baseline");
    (void)known_variants();
    return spec;
}

AblationReport run_ablation(const RunConfig& base, const AblationSpec& spec,
                            const std::vector<DataPair>& pairs) {
    AblationReport report;
    const bool f64 = base.get_enum("precision") == "f64";
    for (const auto& variant : spec.variants) {
        for (uint64_t seed : spec.seeds) {
            report.runs.push_back(f64 ? run_variant<double>(base, variant, seed, pairs)
                                      : run_variant<float>(base, variant, seed, pairs));
        }
    }

    // aggregate per variant (first occurrence wins for duplicates)
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> mse_by, jit_by;
    for (const auto& run : report.runs) {
        if (!mse_by.count(run.variant)) order.push_back(run.variant);
        mse_by[run.variant].push_back(run.mse);
        jit_by[run.variant].push_back(run.jitter);
    }

    // directional verdicts vs full, seed by seed
    const std::vector<double>& full_mse = mse_by.at("full");
    const std::vector<double>& full_jit = jit_by.at("full");
    for (const auto& variant : order) {
        if (variant == "full") continue;
        AblationVerdict vm{variant, "mse", 0, static_cast<int>(spec.seeds.size())};
        AblationVerdict vj{variant, "jitter", 0, static_cast<int>(spec.seeds.size())};
        for (size_t s = 0; s < spec.seeds.size(); ++s) {
            if (full_mse[s] < mse_by.at(variant)[s]) vm.wins++;
            if (full_jit[s] < jit_by.at(variant)[s]) vj.wins++;
        }
        report.verdicts.push_back(vm);
        report.verdicts.push_back(vj);
    }

    std::ostringstream ss;
    char buf[128];
    ss << "variant\tseed\tmse\tjitter\n";
    for (const auto& run : report.runs) {
        std::snprintf(buf, sizeof(buf), "%s\t%llu\t%.9g\t%.9g", run.variant.c_str(),
                      static_cast<unsigned long long>(run.seed), run.mse, run.jitter);
        ss << buf << '\n';
    }
    ss << "\nvariant\tmse_mean\tmse_sd\tjitter_mean\tjitter_sd\n";
    for (const auto& variant : order) {
        const Stats ms = mean_sd(mse_by[variant]);
        const Stats js = mean_sd(jit_by[variant]);
        std::snprintf(buf, sizeof(buf), "%s\t%.9g\t%.9g\t%.9g\t%.9g", variant.c_str(), ms.mean,
                      ms.sd, js.mean, js.sd);
        ss << buf << '\n';
    }
    ss << "\n# config diff vs full (exactly one switch per variant)\n";
    for (const auto& variant : order) {
        if (variant == "full") continue;
        ss << variant << '\t' << ablation_toggle(variant) << '\n';
    }
    ss << "\n# directional verdicts (seeds where full is strictly better)\n";
    for (const auto& v : report.verdicts)
        ss << v.metric << "\tfull<" << v.variant << '\t' << v.wins << '/' << v.total << '\n';
    report.text = ss.str();
    return report;
}

}  // namespace modit
