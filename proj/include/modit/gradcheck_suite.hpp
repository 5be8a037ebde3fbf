#pragma once

#include <string>
#include <vector>

#include "modit/config.hpp"
#include "modit/gradcheck.hpp"

namespace modit {

struct GradSuiteRow {
    std::string module;
    std::string block;
    double max_rel_error = 0.0;
};

struct GradSuiteResult {
    std::vector<GradSuiteRow> rows;
    double overall = 0.0;

    bool pass(double tol = 1e-4) const { return overall < tol; }
    std::string to_tsv() const;
};

// Finite-difference verification of every hand-written backward pass
// (attention roles, one transformer block, the full denoiser, the losses,
// and the blink/pose head) on the shapes in `cfg`. Always runs in double.
// inject_fault corrupts one analytic gradient; used to test failure reporting.
GradSuiteResult run_gradcheck_suite(const RunConfig& cfg, bool inject_fault = false);

}  // namespace modit
