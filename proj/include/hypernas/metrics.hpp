#pragma once

#include <optional>
#include <vector>

namespace hypernas {

// Tie-corrected Kendall rank correlation (tau-b), computed in O(n log n) via
// merge-sort inversion counting. Returns nullopt when every value on either
// side is tied (the coefficient is undefined there).
std::optional<double> kendall_tau(const std::vector<double>& pred,
                                  const std::vector<double>& truth);

// Spearman rank correlation: Pearson correlation of fractional (average)
// ranks. Returns nullopt when either rank vector has zero variance.
std::optional<double> spearman(const std::vector<double>& pred, const std::vector<double>& truth);

// Average ranks, 1-based; ties share the mean of their positions.
std::vector<double> fractional_ranks(const std::vector<double>& values);

}  // namespace hypernas
