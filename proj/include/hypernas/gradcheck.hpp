#pragma once

#include <string>
#include <vector>

#include "hypernas/trainer.hpp"

namespace hypernas {

struct GradCheckOptions {
    double h = 1e-5;
    double tolerance = 1e-3;
    int samples_per_tensor = 6;  // coordinates probed per parameter tensor
    double kink_radius = 1e-6;   // probes this close to a relu kink are excluded
    uint64_t seed = 0;
    std::string group_filter;       // empty: all of encoder|hypernet|regressor|rho
    std::string inject_bug_tensor;  // test fixture: corrupts this tensor's analytic gradient
};

struct GradCheckProbe {
    std::string tensor;
    int64_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
    bool kink_excluded = false;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckProbe> probes;
    int checked = 0;
    int passed = 0;
    int excluded = 0;
    std::vector<std::string> failed_tensors;
    bool ok = false;
};

// Central-difference check of the dual-task objective's analytic gradients on
// one architecture/batch, probing a seeded sample of coordinates per tensor.
GradCheckReport gradcheck_dual(ModelState& state, const ArchitectureSpec& arch, double label,
                               const AuxBatch& batch, double q, const GradCheckOptions& opts);

}  // namespace hypernas
