#include "hypernas/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hypernas {

double TaskWeights::u_pred() const { return std::exp(rho_pred); }
double TaskWeights::u_hyper() const { return std::exp(rho_hyper); }

namespace {

void check_losses(double lp, double lh) {
    if (lp < 0.0 || lh < 0.0)
        throw std::invalid_argument("total_loss: task losses must be nonnegative");
}

double term(double loss, double rho, double q) {
    const double u2 = std::exp(2.0 * rho);
    return std::pow(loss, q) / (2.0 * u2) + std::log1p(u2);
}

}  // namespace

double total_loss(double loss_pred, double loss_hyper, const TaskWeights& w) {
    check_losses(loss_pred, loss_hyper);
    if (w.q <= 0.0) throw std::invalid_argument("total_loss: q must be positive");
    return term(loss_pred, w.rho_pred, w.q) + term(loss_hyper, w.rho_hyper, w.q);
}

NodeId total_loss_t(Tape& t, NodeId loss_pred, NodeId loss_hyper, NodeId rho_pred, NodeId rho_hyper,
                    double q) {
    check_losses(t.value(loss_pred).item(), t.value(loss_hyper).item());
    auto task_term = [&](NodeId loss, NodeId rho) {
        // L^q * exp(-2 rho) / 2  +  softplus(2 rho); the L^(q-1) coefficient
        // is differentiated through, not detached.
        const NodeId lq = t.pow_const(loss, q);
        const NodeId inv_u2 = t.exp(t.scale(rho, -2.0));
        const NodeId weighted = t.scale(t.mul(lq, inv_u2), 0.5);
        const NodeId reg = t.softplus(t.scale(rho, 2.0));  // ln(1 + u^2)
        return t.add(weighted, reg);
    };
    return t.add(task_term(loss_pred, rho_pred), task_term(loss_hyper, rho_hyper));
}

EffectiveWeights effective_weights(double loss_pred, double loss_hyper, const TaskWeights& w) {
    check_losses(loss_pred, loss_hyper);
    EffectiveWeights out;
    if (loss_pred == 0.0 && loss_hyper == 0.0) {
        out.alpha_pred = 0.5;
        out.alpha_hyper = 0.5;
        out.scaler = 0.0;
        out.degenerate = true;
        return out;
    }
    const double cp = std::pow(loss_pred, w.q - 1.0) / (2.0 * w.u_pred() * w.u_pred());
    const double ch = std::pow(loss_hyper, w.q - 1.0) / (2.0 * w.u_hyper() * w.u_hyper());
    out.scaler = cp + ch;
    out.alpha_pred = cp / out.scaler;
    out.alpha_hyper = ch / out.scaler;
    return out;
}

bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dominates: task sets differ");
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] > b[i]) return false;
    return true;
}

namespace {

bool strictly_dominates(const std::vector<double>& a, const std::vector<double>& b) {
    bool strict = false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

}  // namespace

std::vector<std::vector<double>> pareto_front(const std::vector<std::vector<double>>& points) {
    if (points.empty()) return {};
    const size_t tasks = points[0].size();
    for (const auto& p : points)
        if (p.size() != tasks) throw std::invalid_argument("pareto_front: mixed task counts");

    std::vector<bool> keep(points.size(), true);
    if (tasks == 2) {
        // Sweep in (x asc, y asc) order; a point is dominated iff some point
        // with smaller x has y <= its own, or an x-tied point has smaller y.
        std::vector<size_t> order(points.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (points[a][0] != points[b][0]) return points[a][0] < points[b][0];
            return points[a][1] < points[b][1];
        });
        double best_y_before = std::numeric_limits<double>::infinity();
        size_t i = 0;
        while (i < order.size()) {
            size_t j = i;
            const double x = points[order[i]][0];
            const double min_y = points[order[i]][1];
            while (j < order.size() && points[order[j]][0] == x) {
                const double y = points[order[j]][1];
                if (best_y_before <= y || min_y < y) keep[order[j]] = false;
                ++j;
            }
            best_y_before = std::min(best_y_before, min_y);
            i = j;
        }
    } else {
        for (size_t i = 0; i < points.size(); ++i)
            for (size_t j = 0; j < points.size(); ++j)
                if (j != i && strictly_dominates(points[j], points[i])) {
                    keep[i] = false;
                    break;
                }
    }
    std::vector<std::vector<double>> out;
    for (size_t i = 0; i < points.size(); ++i)
        if (keep[i]) out.push_back(points[i]);
    return out;
}

}  // namespace hypernas
