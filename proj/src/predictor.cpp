#include "hypernas/predictor.hpp"

#include <stdexcept>

namespace hypernas {

RegressorParams init_regressor_params(int dim, Rng& rng) {
    RegressorParams p;
    Rng r1 = rng.child("w1");
    Rng r2 = rng.child("w2");
    p.w1 = glorot_uniform(dim, dim, r1);
    p.b1 = Tensor::zeros({1, dim});
    p.w2 = glorot_uniform(dim, 1, r2);
    p.b2 = Tensor::zeros({1, 1});
    return p;
}

BoundRegressor bind_regressor(Tape& t, const RegressorParams& p, bool trainable) {
    auto bind = [&](const Tensor& v) { return trainable ? t.leaf(v) : t.constant(v); };
    return BoundRegressor{bind(p.w1), bind(p.b1), bind(p.w2), bind(p.b2)};
}

NodeId predict_t(Tape& t, NodeId h, const BoundRegressor& reg) {
    const NodeId hidden = t.relu(t.add_rowvec(t.matmul(h, reg.w1), reg.b1));
    return t.sigmoid(t.add_rowvec(t.matmul(hidden, reg.w2), reg.b2));
}

NodeId pred_loss_t(Tape& t, NodeId yhat, double y) {
    if (!(y >= 0.0 && y <= 1.0))
        throw std::invalid_argument("pred_loss: label " + std::to_string(y) + " outside [0,1]");
    const NodeId diff = t.sub(yhat, t.constant(Tensor({1, 1}, {y})));
    return t.reshape(t.mul(diff, diff), {1});
}

double predict(const Tensor& h, const RegressorParams& params) {
    h.require_finite("predict input");
    Tape t;
    BoundRegressor reg = bind_regressor(t, params, false);
    return t.value(predict_t(t, t.constant(h), reg)).item();
}

double pred_loss(double yhat, double y) {
    if (!(y >= 0.0 && y <= 1.0))
        throw std::invalid_argument("pred_loss: label " + std::to_string(y) + " outside [0,1]");
    const double d = yhat - y;
    return d * d;
}

double pred_loss_batch(const std::vector<double>& yhat, const std::vector<double>& y) {
    if (yhat.size() != y.size()) throw std::invalid_argument("pred_loss_batch: length mismatch");
    if (yhat.empty()) throw std::invalid_argument("pred_loss_batch: empty batch");
    double acc = 0.0;
    for (size_t i = 0; i < yhat.size(); ++i) acc += pred_loss(yhat[i], y[i]);
    return acc / static_cast<double>(yhat.size());
}

}  // namespace hypernas
