#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "modit/matrix.hpp"

namespace modit {

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_block;
    int worst_row = 0;
    int worst_col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// One named parameter tensor plus the analytic gradient computed at the
// unperturbed point. Gradient checking runs in double only; finite
// differences are unreliable in float.
struct ParamBlockRef {
    std::string name;
    Matrix<double>* value = nullptr;
    const Matrix<double>* grad = nullptr;
};

// Central-difference check of analytic gradients. loss_fn must be a
// deterministic function of the referenced parameters; it is re-evaluated
// with each entry nudged by +/-step. Relative error per entry is
// |a - n| / max(|a|, |n|, 1e-8).
template <class LossFn>
GradCheckReport gradient_check(LossFn&& loss_fn, std::vector<ParamBlockRef> blocks,
                               double step = 1e-5,
                               std::vector<std::pair<std::string, double>>* per_block = nullptr) {
    if (step <= 0.0) throw std::invalid_argument("gradient_check: step must be > 0");
    GradCheckReport report;
    for (auto& block : blocks) {
        double block_max = 0.0;
        Matrix<double>& p = *block.value;
        for (int r = 0; r < p.rows; ++r) {
            for (int c = 0; c < p.cols; ++c) {
                const double saved = p.at(r, c);
                p.at(r, c) = saved + step;
                const double lp = loss_fn();
                p.at(r, c) = saved - step;
                const double lm = loss_fn();
                p.at(r, c) = saved;
                if (!std::isfinite(lp) || !std::isfinite(lm))
                    throw NumericError("gradient_check: non-finite loss at " + block.name);
                const double numeric = (lp - lm) / (2.0 * step);
                const double analytic = block.grad->at(r, c);
                const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
                const double rel = std::fabs(analytic - numeric) / denom;
                block_max = std::max(block_max, rel);
                if (rel > report.max_relative_error) {
                    report.max_relative_error = rel;
                    report.worst_block = block.name;
                    report.worst_row = r;
                    report.worst_col = c;
                    report.analytic = analytic;
                    report.numeric = numeric;
                }
            }
        }
        if (per_block) per_block->emplace_back(block.name, block_max);
    }
    return report;
}

}  // namespace modit
