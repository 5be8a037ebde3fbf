#pragma once

#include <string>
#include <vector>

#include "modit/config.hpp"
#include "modit/synth.hpp"

namespace modit {

// One-switch variants of the full model. Each maps to exactly one
// configuration override.
struct AblationSpec {
    std::vector<std::string> variants;  // from: full, no_beta0, no_bias_injection,
                                        // no_temporal_revision, no_velocity_loss
    std::vector<uint64_t> seeds;
};

AblationSpec parse_ablation_spec(const std::string& path);

// The single config key each variant toggles, as "key=value" ("" for full).
std::string ablation_toggle(const std::string& variant);

struct AblationRun {
    std::string variant;
    uint64_t seed = 0;
    double mse = 0.0;     // mean per-entry MSE of sampled sequences vs ground truth
    double jitter = 0.0;  // mean jitter metric of sampled sequences
};

struct AblationVerdict {
    std::string variant;     // compared against full
    std::string metric;      // "mse" or "jitter"
    int wins = 0;            // seeds where full < variant
    int total = 0;
};

struct AblationReport {
    std::vector<AblationRun> runs;
    std::vector<AblationVerdict> verdicts;
    std::string text;  // full tab-separated report
};

// Trains every (variant, seed) combination on the given pairs with the base
// configuration plus the variant's single toggle, samples the training
// conditions, and reports MSE-to-ground-truth and jitter per run plus
// directional verdicts against the full variant.
AblationReport run_ablation(const RunConfig& base, const AblationSpec& spec,
                            const std::vector<DataPair>& pairs);

}  // namespace modit
