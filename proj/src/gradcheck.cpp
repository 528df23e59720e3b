#include "hypernas/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hypernas {

GradCheckReport gradcheck_dual(ModelState& state, const ArchitectureSpec& arch, double label,
                               const AuxBatch& batch, double q, const GradCheckOptions& opts) {
    GradCheckReport report;

    ForwardOutcome center =
        evaluate_step(state, arch, label, &batch, Paradigm::Dual, q, true);
    if (!opts.inject_bug_tensor.empty()) {
        for (auto& [name, g] : center.grads)
            if (name == opts.inject_bug_tensor)
                for (double& v : g.data) v += 0.5;
    }

    std::set<std::string> failed;
    Rng probe_rng = Rng(opts.seed).child("gradcheck");
    for (auto& [name, tensor_ptr] : state.named_params()) {
        if (!opts.group_filter.empty() && param_group(name) != opts.group_filter) continue;
        const Tensor* analytic_grad = nullptr;
        for (const auto& [gname, g] : center.grads)
            if (gname == name) analytic_grad = &g;
        if (!analytic_grad) continue;

        Tensor& t = *tensor_ptr;
        const int64_t n = t.size();
        Rng rng = probe_rng.child(name);
        std::set<int64_t> indices;
        const int want = std::min<int64_t>(opts.samples_per_tensor, n);
        while (static_cast<int>(indices.size()) < want)
            indices.insert(rng.uniform_int(static_cast<int>(n)));

        for (int64_t idx : indices) {
            const double original = t.at(idx);
            t.at(idx) = original + opts.h;
            const ForwardOutcome hi =
                evaluate_step(state, arch, label, &batch, Paradigm::Dual, q, false);
            t.at(idx) = original - opts.h;
            const ForwardOutcome lo =
                evaluate_step(state, arch, label, &batch, Paradigm::Dual, q, false);
            t.at(idx) = original;

            GradCheckProbe probe;
            probe.tensor = name;
            probe.index = idx;
            probe.analytic = analytic_grad->at(idx);
            probe.numeric = (hi.objective - lo.objective) / (2.0 * opts.h);
            const double mag = std::max(std::fabs(probe.analytic), std::fabs(probe.numeric));
            const double err = std::fabs(probe.analytic - probe.numeric);
            probe.rel_err = mag > 0.0 ? err / mag : 0.0;
            // Below the finite-difference noise floor the relative error is
            // meaningless; accept tiny absolute differences outright.
            probe.pass = err <= std::max(opts.tolerance * mag, 1e-7);
            const double kink =
                std::min({center.kink_distance, hi.kink_distance, lo.kink_distance});
            if (!probe.pass && kink < opts.kink_radius) {
                probe.kink_excluded = true;
                report.excluded += 1;
            } else {
                report.checked += 1;
                if (probe.pass)
                    report.passed += 1;
                else
                    failed.insert(name);
            }
            report.probes.push_back(probe);
        }
    }
    report.failed_tensors.assign(failed.begin(), failed.end());
    report.ok = report.checked > 0 && report.passed == report.checked;
    return report;
}

}  // namespace hypernas
