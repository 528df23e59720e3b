#pragma once

#include <vector>

#include "hypernas/tape.hpp"

namespace hypernas {

// Per-task adaptive weights u_t = exp(rho_t) (positivity by construction)
// plus the fixed preference coefficient q.
struct TaskWeights {
    double rho_pred = 0.0;
    double rho_hyper = 0.0;
    double q = 1.5;

    double u_pred() const;
    double u_hyper() const;
};

// Rescaled per-task coefficients: alpha_t = L_t^(q-1) / (2 s u_t^2) with the
// scaler s chosen so the alphas sum to one.
struct EffectiveWeights {
    double alpha_pred = 0.0;
    double alpha_hyper = 0.0;
    double scaler = 0.0;
    bool degenerate = false;  // all task losses were zero; alphas fall back to uniform
};

// Sum over tasks of L_t^q / (2 u_t^2) + ln(1 + u_t^2). Losses must be
// nonnegative (both task losses are squared error / cross-entropy).
double total_loss(double loss_pred, double loss_hyper, const TaskWeights& w);

// Tape form; rho_pred / rho_hyper are scalar nodes, losses are scalar nodes.
NodeId total_loss_t(Tape& t, NodeId loss_pred, NodeId loss_hyper, NodeId rho_pred, NodeId rho_hyper,
                    double q);

EffectiveWeights effective_weights(double loss_pred, double loss_hyper, const TaskWeights& w);

// Domination exactly as defined for the diagnostics: a dominates b iff every
// task loss of a is <= the one of b. Note this makes domination reflexive.
bool dominates(const std::vector<double>& a, const std::vector<double>& b);

// Non-dominated subset (strict domination: <= in all coordinates and < in at
// least one); preserves input order, duplicates of a front point all survive.
std::vector<std::vector<double>> pareto_front(const std::vector<std::vector<double>>& points);

}  // namespace hypernas
