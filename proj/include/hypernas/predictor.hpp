#pragma once

#include "hypernas/tape.hpp"

namespace hypernas {

// Accuracy regression head: one hidden ReLU layer of width d, sigmoid output,
// so predictions stay strictly inside (0,1) like the normalized labels.
struct RegressorParams {
    Tensor w1;  // [d,d]
    Tensor b1;  // [1,d]
    Tensor w2;  // [d,1]
    Tensor b2;  // [1,1]
};

RegressorParams init_regressor_params(int dim, Rng& rng);

struct BoundRegressor {
    NodeId w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

BoundRegressor bind_regressor(Tape& t, const RegressorParams& p, bool trainable);

// h: [1,d] -> scalar prediction node ([1,1]).
NodeId predict_t(Tape& t, NodeId h, const BoundRegressor& reg);

// Squared error (yhat - y)^2 as a scalar node; y must lie in [0,1].
NodeId pred_loss_t(Tape& t, NodeId yhat, double y);

double predict(const Tensor& h, const RegressorParams& params);

// (yhat - y)^2; throws if y outside [0,1].
double pred_loss(double yhat, double y);

// Mean over per-pair squared errors.
double pred_loss_batch(const std::vector<double>& yhat, const std::vector<double>& y);

}  // namespace hypernas
