#include <doctest.h>

#include <cmath>

#include "hypernas/predictor.hpp"
#include "oracles.hpp"

using namespace hypernas;

TEST_SUITE("predictor") {

TEST_CASE("zero input with zero weights predicts one half") {
    RegressorParams p;
    p.w1 = Tensor({4, 4});
    p.b1 = Tensor({1, 4});
    p.w2 = Tensor({4, 1});
    p.b2 = Tensor({1, 1});
    CHECK(predict(Tensor({1, 4}), p) == 0.5);
}

TEST_CASE("scaling the output weight pushes predictions away from one half") {
    Rng rng(1);
    RegressorParams p = init_regressor_params(4, rng);
    const Tensor h = random_uniform({1, 4}, 0.1, 1.0, rng);
    const double y1 = predict(h, p);
    RegressorParams doubled = p;
    for (double& v : doubled.w2.data) v *= 2.0;
    for (double& v : doubled.b2.data) v *= 2.0;
    const double y2 = predict(h, doubled);
    if (y1 > 0.5) CHECK(y2 >= y1);
    if (y1 < 0.5) CHECK(y2 <= y1);
    CHECK(y1 > 0.0);
    CHECK(y1 < 1.0);
}

TEST_CASE("prediction gradient w.r.t. the embedding matches finite differences") {
    Rng rng(2);
    const RegressorParams p = init_regressor_params(6, rng);
    Tensor h = random_uniform({1, 6}, -1.0, 1.0, rng);

    Tape t;
    const BoundRegressor reg = bind_regressor(t, p, false);
    const NodeId hid = t.leaf(h);
    t.backward(t.reshape(predict_t(t, hid, reg), {1}));
    const Tensor analytic = t.grad(hid);

    auto eval = [&]() { return predict(h, p); };
    for (int64_t k = 0; k < h.size(); ++k) {
        const double numeric = oracles::central_diff(eval, h, k);
        CHECK(oracles::grad_close(analytic.at(k), numeric, 1e-4));
    }
}

TEST_CASE("pred_loss values") {
    CHECK(pred_loss(0.3, 0.3) == 0.0);
    CHECK(pred_loss(0.9, 0.7) == doctest::Approx(0.04).epsilon(1e-12));
    CHECK_THROWS_AS(pred_loss(0.5, 1.2), std::invalid_argument);
    CHECK_THROWS_AS(pred_loss(0.5, -0.1), std::invalid_argument);
}

TEST_CASE("batched loss equals the mean of individual losses") {
    Rng rng(3);
    std::vector<double> yhat, y;
    for (int i = 0; i < 9; ++i) {
        yhat.push_back(rng.uniform());
        y.push_back(rng.uniform());
    }
    double mean = 0.0;
    for (size_t i = 0; i < y.size(); ++i) mean += pred_loss(yhat[i], y[i]);
    mean /= static_cast<double>(y.size());
    CHECK(std::fabs(pred_loss_batch(yhat, y) - mean) < 1e-15);
}

TEST_CASE("loss is nonnegative and zero only at equality") {
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const double yhat = rng.uniform();
        const double y = rng.uniform();
        const double l = pred_loss(yhat, y);
        CHECK(l >= 0.0);
        if (yhat != y) CHECK(l > 0.0);
    }
}

}  // TEST_SUITE
