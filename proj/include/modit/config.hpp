#pragma once

#include <map>
#include <string>
#include <vector>

#include "modit/attention.hpp"
#include "modit/denoiser.hpp"
#include "modit/synth.hpp"

namespace modit {

// Flat key=value run configuration. Every key is validated against the
// registry (type + range); unknown keys and out-of-range values are errors
// naming the offending key.
class RunConfig {
public:
    RunConfig();  // all defaults

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);  // validates

    long long get_int(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_enum(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    // Keys that must match between a checkpoint snapshot and the current run
    // for parameters to be loadable.
    static const std::vector<std::string>& model_keys();

private:
    std::map<std::string, std::string> values_;
};

// Typed views over the validated configuration.
DenoiserConfig denoiser_config(const RunConfig& cfg);
SynthSpec synth_spec(const RunConfig& cfg);
PhaseConfig phase_config(const RunConfig& cfg);

// Effective threshold: phase.t_threshold, or schedule.T / 2 (at least 1) when 0.
int effective_t_threshold(const RunConfig& cfg);

// MODIT_THREADS cap (>= 1); defaults to 1 when unset or invalid.
int env_thread_cap();

}  // namespace modit
