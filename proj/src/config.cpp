#include "modit/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace modit {

namespace {

enum class KeyType { integer, real, boolean, enumeration };

struct KeySpec {
    KeyType type;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::string> choices;
    std::string def;
};

const std::map<std::string, KeySpec>& registry() {
    static const std::map<std::string, KeySpec> reg = {
        {"precision", {KeyType::enumeration, 0, 0, {"f32", "f64"}, "f32"}},

        {"schedule.T", {KeyType::integer, 1, 1e7, {}, "1000"}},
        {"schedule.beta_start", {KeyType::real, 1e-12, 0.999999, {}, "1e-4"}},
        {"schedule.beta_end", {KeyType::real, 1e-12, 0.999999, {}, "0.02"}},

        {"model.width", {KeyType::integer, 2, 65536, {}, "1024"}},
        {"model.ffn_width", {KeyType::integer, 1, 262144, {}, "2048"}},
        {"model.heads", {KeyType::integer, 1, 1024, {}, "4"}},
        {"model.blocks", {KeyType::integer, 1, 64, {}, "1"}},
        {"model.frames", {KeyType::integer, 2, 4096, {}, "12"}},
        {"model.coeff_dim", {KeyType::integer, 1, 4096, {}, "64"}},
        {"model.audio_dim", {KeyType::integer, 1, 4096, {}, "16"}},
        {"model.z_dim", {KeyType::integer, 1, 1024, {}, "8"}},
        {"model.temporal_hidden", {KeyType::integer, 1, 4096, {}, "16"}},
        {"model.use_beta0", {KeyType::boolean, 0, 0, {}, "true"}},
        {"model.temporal_revision", {KeyType::boolean, 0, 0, {}, "true"}},

        {"mask.bandwidth", {KeyType::integer, 0, 4096, {}, "1"}},
        {"mask.sigma", {KeyType::real, 1e-9, 1e9, {}, "2.0"}},

        {"phase.enabled", {KeyType::boolean, 0, 0, {}, "true"}},
        {"phase.t_threshold", {KeyType::integer, 0, 1e7, {}, "0"}},
        {"phase.order",
         {KeyType::enumeration, 0, 0, {"algorithm_literal", "prose_order"}, "algorithm_literal"}},
        {"phase.bias_targets", {KeyType::enumeration, 0, 0, {}, "cross"}},  // comma set, custom check
        {"phase.additive", {KeyType::boolean, 0, 0, {}, "false"}},
        {"phase.apply_in_training", {KeyType::boolean, 0, 0, {}, "true"}},

        {"train.lr", {KeyType::real, 0, 10, {}, "1e-4"}},
        {"train.steps", {KeyType::integer, 0, 1e9, {}, "2000"}},
        {"train.batch", {KeyType::integer, 1, 65536, {}, "4"}},
        {"train.seed", {KeyType::integer, 0, 9.2e18, {}, "1234"}},
        {"train.weight_decay", {KeyType::real, 0, 10, {}, "0.01"}},
        {"train.beta1", {KeyType::real, 0, 0.999999, {}, "0.9"}},
        {"train.beta2", {KeyType::real, 0, 0.999999, {}, "0.999"}},
        {"train.eps", {KeyType::real, 1e-16, 1, {}, "1e-8"}},
        {"train.lambda_t", {KeyType::real, 0, 1e6, {}, "10"}},
        {"train.lambda_read", {KeyType::real, 0, 1e6, {}, "0.2"}},
        {"train.lambda_lks", {KeyType::real, 0, 1e6, {}, "0.1"}},
        {"train.lambda_v", {KeyType::real, 0, 1e6, {}, "0.1"}},

        {"sampler.mode", {KeyType::enumeration, 0, 0, {"ddim", "ddpm"}, "ddim"}},
        {"sampler.seed", {KeyType::integer, 0, 9.2e18, {}, "7"}},
        {"sampler.resample_inner", {KeyType::integer, 0, 64, {}, "0"}},
        {"sampler.frames", {KeyType::integer, 0, 65536, {}, "0"}},
        {"sampler.window_overlap", {KeyType::integer, 0, 4096, {}, "4"}},

        {"data.seed", {KeyType::integer, 0, 9.2e18, {}, "42"}},
        {"data.pairs", {KeyType::integer, 1, 1e6, {}, "4"}},
        {"data.frames", {KeyType::integer, 2, 65536, {}, "12"}},
        {"data.audio_dim", {KeyType::integer, 1, 4096, {}, "16"}},
        {"data.noise_std", {KeyType::real, 0, 1e6, {}, "0"}},
        {"data.ar_coeff", {KeyType::real, 0, 0.999999, {}, "0.9"}},

        {"blink.stages", {KeyType::integer, 1, 64, {}, "3"}},
        {"blink.kernel", {KeyType::integer, 1, 63, {}, "3"}},
        {"blink.channels", {KeyType::integer, 1, 4096, {}, "32"}},
        {"blink.bins", {KeyType::integer, 2, 4096, {}, "66"}},
    };
    return reg;
}

bool parse_int(const std::string& s, long long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end && *end == '\0';
}

bool parse_real(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0';
}

void validate_bias_targets(const std::string& value) {
    std::istringstream ss(value);
    std::string tok;
    int count = 0;
    while (std::getline(ss, tok, ',')) {
        if (tok != "self" && tok != "cross" && tok != "temporal" && !tok.empty())
            throw ConfigError("phase.bias_targets: unknown target '" + tok + "'");
        if (!tok.empty()) ++count;
    }
    if (count == 0 && value != "none")
        throw ConfigError("phase.bias_targets: expected comma list of self,cross,temporal or none");
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& [key, spec] : registry()) values_[key] = spec.def;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = registry().find(key);
    if (it == registry().end()) throw ConfigError("unknown configuration key '" + key + "'");
    const KeySpec& spec = it->second;
    switch (spec.type) {
        case KeyType::integer: {
            long long v;
            if (!parse_int(value, v))
                throw ConfigError(key + ": '" + value + "' is not an integer");
            if (v < static_cast<long long>(spec.lo) || v > static_cast<long long>(spec.hi))
                throw ConfigError(key + ": value " + value + " out of range [" +
                                  std::to_string(static_cast<long long>(spec.lo)) + ", " +
                                  std::to_string(static_cast<long long>(spec.hi)) + "]");
            break;
        }
        case KeyType::real: {
            double v;
            if (!parse_real(value, v)) throw ConfigError(key + ": '" + value + "' is not a number");
            if (v < spec.lo || v > spec.hi)
                throw ConfigError(key + ": value " + value + " out of range");
            break;
        }
        case KeyType::boolean: {
            if (value != "true" && value != "false" && value != "0" && value != "1")
                throw ConfigError(key + ": '" + value + "' is not a boolean");
            break;
        }
        case KeyType::enumeration: {
            if (key == "phase.bias_targets") {
                validate_bias_targets(value);
            } else if (std::find(spec.choices.begin(), spec.choices.end(), value) ==
                       spec.choices.end()) {
                std::string allowed;
                for (const auto& c : spec.choices) allowed += (allowed.empty() ? "" : "|") + c;
                throw ConfigError(key + ": '" + value + "' not one of {" + allowed + "}");
            }
            break;
        }
    }
    values_[key] = value;
}

RunConfig RunConfig::from_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::map<std::string, bool> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (seen[key]) throw ConfigError("duplicate configuration key '" + key + "'");
        seen[key] = true;
        cfg.set(key, value);
    }
    // cross-field checks
    if (cfg.get_real("schedule.beta_start") > cfg.get_real("schedule.beta_end"))
        throw ConfigError("schedule.beta_start must be <= schedule.beta_end");
    if (cfg.get_int("model.width") % cfg.get_int("model.heads") != 0)
        throw ConfigError("model.width must be divisible by model.heads");
    if (cfg.get_int("phase.t_threshold") > cfg.get_int("schedule.T"))
        throw ConfigError("phase.t_threshold must be <= schedule.T");
    if (cfg.get_int("blink.kernel") % 2 == 0) throw ConfigError("blink.kernel must be odd");
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

long long RunConfig::get_int(const std::string& key) const {
    long long v;
    if (!parse_int(values_.at(key), v)) throw ConfigError(key + ": not an integer");
    return v;
}

double RunConfig::get_real(const std::string& key) const {
    double v;
    if (!parse_real(values_.at(key), v)) throw ConfigError(key + ": not a number");
    return v;
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = values_.at(key);
    return v == "true" || v == "1";
}

std::string RunConfig::get_enum(const std::string& key) const { return values_.at(key); }

const std::vector<std::string>& RunConfig::model_keys() {
    static const std::vector<std::string> keys = {
        "model.width",    "model.ffn_width",  "model.heads",
        "model.blocks",   "model.frames",     "model.coeff_dim",
        "model.audio_dim", "model.z_dim",     "model.temporal_hidden",
        "model.use_beta0", "model.temporal_revision",
    };
    return keys;
}

DenoiserConfig denoiser_config(const RunConfig& cfg) {
    DenoiserConfig c;
    c.width = static_cast<int>(cfg.get_int("model.width"));
    c.ffn_width = static_cast<int>(cfg.get_int("model.ffn_width"));
    c.heads = static_cast<int>(cfg.get_int("model.heads"));
    c.blocks = static_cast<int>(cfg.get_int("model.blocks"));
    c.t_frames = static_cast<int>(cfg.get_int("model.frames"));
    c.coeff_dim = static_cast<int>(cfg.get_int("model.coeff_dim"));
    c.audio_dim = static_cast<int>(cfg.get_int("model.audio_dim"));
    c.z_dim = static_cast<int>(cfg.get_int("model.z_dim"));
    c.temporal_hidden = static_cast<int>(cfg.get_int("model.temporal_hidden"));
    c.use_beta0 = cfg.get_bool("model.use_beta0");
    c.temporal_revision = cfg.get_bool("model.temporal_revision");
    c.validate();
    return c;
}

SynthSpec synth_spec(const RunConfig& cfg) {
    SynthSpec s;
    s.seed = static_cast<uint64_t>(cfg.get_int("data.seed"));
    s.num_pairs = static_cast<int>(cfg.get_int("data.pairs"));
    s.t_frames = static_cast<int>(cfg.get_int("data.frames"));
    s.audio_dim = static_cast<int>(cfg.get_int("data.audio_dim"));
    s.coeff_dim = static_cast<int>(cfg.get_int("model.coeff_dim"));
    s.noise_std = static_cast<float>(cfg.get_real("data.noise_std"));
    s.ar_coeff = static_cast<float>(cfg.get_real("data.ar_coeff"));
    return s;
}

int effective_t_threshold(const RunConfig& cfg) {
    const int raw = static_cast<int>(cfg.get_int("phase.t_threshold"));
    if (raw > 0) return raw;
    return std::max(1, static_cast<int>(cfg.get_int("schedule.T")) / 2);
}

PhaseConfig phase_config(const RunConfig& cfg) {
    PhaseConfig p;
    p.t_threshold = effective_t_threshold(cfg);
    p.order = cfg.get_enum("phase.order") == "prose_order" ? PhaseOrder::prose_order
                                                           : PhaseOrder::algorithm_literal;
    p.additive = cfg.get_bool("phase.additive");
    const std::string targets = cfg.get_enum("phase.bias_targets");
    p.targets.self_attn = targets.find("self") != std::string::npos;
    p.targets.cross_attn = targets.find("cross") != std::string::npos;
    p.targets.temporal_attn = targets.find("temporal") != std::string::npos;
    return p;
}

int env_thread_cap() {
    const char* env = std::getenv("MODIT_THREADS");
    if (!env) return 1;
    long long v;
    if (!parse_int(env, v) || v < 1) return 1;
    return static_cast<int>(v);
}

}  // namespace modit
