#include <doctest.h>

#include <cmath>

#include "hypernas/tape.hpp"
#include "oracles.hpp"

using namespace hypernas;

namespace {

Tensor rand_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return random_uniform(std::move(shape), lo, hi, rng);
}

// Checks every coordinate of every leaf against central differences.
template <typename Builder>
void check_grads(std::vector<Tensor> leaves, Builder&& build, double tol = 1e-4) {
    Tape t0;
    std::vector<NodeId> ids;
    for (const auto& l : leaves) ids.push_back(t0.leaf(l));
    const NodeId loss = build(t0, ids);
    t0.backward(loss);
    std::vector<Tensor> grads;
    for (NodeId id : ids) grads.push_back(t0.grad(id));

    for (size_t li = 0; li < leaves.size(); ++li) {
        for (int64_t k = 0; k < leaves[li].size(); ++k) {
            auto f = [&]() {
                Tape t;
                std::vector<NodeId> ids2;
                for (const auto& l : leaves) ids2.push_back(t.constant(l));
                return t.value(build(t, ids2)).item();
            };
            const double numeric = oracles::central_diff(f, leaves[li], k);
            const double analytic = grads[li].at(k);
            CAPTURE(li);
            CAPTURE(k);
            CHECK(oracles::grad_close(analytic, numeric, tol));
        }
    }
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("matmul identity and projector") {
    Tape t;
    const NodeId eye = t.constant(Tensor({2, 2}, {1, 0, 0, 1}));
    const NodeId a = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
    CHECK(t.value(t.matmul(eye, a)) == t.value(a));

    const NodeId proj = t.constant(Tensor({2, 2}, {1, 0, 0, 0}));
    const NodeId b = t.constant(Tensor({2, 2}, {5, 6, 7, 8}));
    CHECK(t.value(t.matmul(proj, b)) == Tensor({2, 2}, {5, 6, 0, 0}));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Tape t;
    const NodeId a = t.constant(Tensor({2, 3}));
    const NodeId b = t.constant(Tensor({2, 2}));
    CHECK_THROWS_AS(t.matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tensor a = rand_tensor({3, 4}, rng);
    Tensor b = rand_tensor({4, 2}, rng);
    check_grads({a, b},
                [](Tape& t, const std::vector<NodeId>& ids) {
                    return t.sum_all(t.matmul(ids[0], ids[1]));
                },
                1e-6);
}

TEST_CASE("relu values and gradient mask") {
    Tape t;
    const NodeId x = t.constant(Tensor({3}, {-1, 0, 2}));
    CHECK(t.value(t.relu(x)) == Tensor({3}, {0, 0, 2}));

    const NodeId neg = t.constant(Tensor({4}, {-3, -0.5, -1e-9, -7}));
    CHECK(t.value(t.relu(neg)) == Tensor({4}, {0, 0, 0, 0}));

    // gradient equals the indicator of positive inputs
    Rng rng(11);
    Tensor v({6});
    for (double& e : v.data) {
        e = rng.uniform(0.2, 1.0);  // keep away from the kink
        if (rng.bernoulli(0.5)) e = -e;
    }
    Tape t2;
    const NodeId leaf = t2.leaf(v);
    t2.backward(t2.sum_all(t2.relu(leaf)));
    const Tensor g = t2.grad(leaf);
    for (int64_t i = 0; i < v.size(); ++i) CHECK(g.at(i) == (v.at(i) > 0.0 ? 1.0 : 0.0));
    check_grads({v}, [](Tape& t3, const std::vector<NodeId>& ids) {
        return t3.sum_all(t3.relu(ids[0]));
    });
}

TEST_CASE("backward basics") {
    Rng rng(3);
    Tensor p = rand_tensor({2, 3}, rng);

    Tape t;
    NodeId leaf = t.leaf(p);
    t.backward(t.sum_all(leaf));
    CHECK(t.grad(leaf) == Tensor({2, 3}, std::vector<double>(6, 1.0)));

    Tape t2;
    leaf = t2.leaf(p);
    t2.backward(t2.scale(t2.sum_all(t2.mul(leaf, leaf)), 0.5));
    CHECK(t2.grad(leaf) == p);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape t;
    const NodeId leaf = t.leaf(Tensor({2}, {1, 2}));
    CHECK_THROWS_AS(t.backward(leaf), std::logic_error);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(5);
    Tensor p = rand_tensor({4}, rng, 0.3, 1.2);

    auto grads_for = [&](int which) {
        Tape t;
        const NodeId leaf = t.leaf(p);
        const NodeId l1 = t.sum_all(t.mul(leaf, leaf));
        const NodeId l2 = t.sum_all(t.exp(leaf));
        if (which == 0) t.backward(l1);
        if (which == 1) t.backward(l2);
        if (which == 2) t.backward(t.add(l1, l2));
        return t.grad(leaf);
    };
    const Tensor g1 = grads_for(0), g2 = grads_for(1), gsum = grads_for(2);
    for (int64_t i = 0; i < p.size(); ++i)
        CHECK(gsum.at(i) == doctest::Approx(g1.at(i) + g2.at(i)).epsilon(1e-14));
}

TEST_CASE("gradient accumulates over repeated use of a node") {
    Tensor p({1}, {0.7});
    Tape t;
    const NodeId leaf = t.leaf(p);
    t.backward(t.sum_all(t.add(leaf, leaf)));
    CHECK(t.grad(leaf).item() == 2.0);
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
    Rng rng(17);
    Tensor a = rand_tensor({3, 4}, rng, 0.2, 1.5);
    Tensor b = rand_tensor({3, 4}, rng, 0.2, 1.5);
    Tensor r = rand_tensor({1, 4}, rng);

    check_grads({a, b}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.mean_all(t.mul(t.sub(ids[0], ids[1]), ids[0]));
    });
    check_grads({a, r}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.sigmoid(t.add_rowvec(ids[0], ids[1])));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.mul(t.mean_rows(ids[0]), t.mean_rows(ids[0])));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.exp(t.row(ids[0], 1)));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.log(ids[0]));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.pow_const(ids[0], 1.5));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.softplus(t.scale(ids[0], 2.0)));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.take_prefix(t.reshape(ids[0], {12}), 5));
    });
    check_grads({a}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.sum_all(t.gather_rows(ids[0], {2, 0, 2}));
    });
}

TEST_CASE("image op gradients match finite differences") {
    Rng rng(23);
    Tensor x = rand_tensor({2, 3, 5, 5}, rng);
    Tensor w = rand_tensor({4, 3, 3, 3}, rng, -0.5, 0.5);

    check_grads({x, w}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.mean_all(t.conv2d(ids[0], ids[1], 1, 1));
    });
    check_grads({x, w}, [](Tape& t, const std::vector<NodeId>& ids) {
        const NodeId y = t.conv2d(ids[0], ids[1], 2, 1);
        return t.mean_all(t.mul(y, y));
    });
    check_grads({x}, [](Tape& t, const std::vector<NodeId>& ids) {
        const NodeId y = t.avgpool2d(ids[0], 2, 1, 0, 1);
        return t.sum_all(t.mul(y, y));
    });
    check_grads({x}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.mean_all(t.channel_dup(t.avgpool2d(ids[0], 2, 2, 0, 0)));
    });
    check_grads({x}, [](Tape& t, const std::vector<NodeId>& ids) {
        const NodeId y = t.global_avg_pool(ids[0]);
        return t.sum_all(t.mul(y, y));
    });
    check_grads(
        {x},
        [](Tape& t, const std::vector<NodeId>& ids) {
            const NodeId y = t.batchnorm2d(ids[0]);
            return t.mean_all(t.mul(y, y));
        },
        5e-4);
    check_grads({x}, [](Tape& t, const std::vector<NodeId>& ids) {
        return t.mean_all(t.maxpool2d(ids[0], 3, 1, 1, 1));
    });
}

TEST_CASE("softmax cross-entropy value and gradient") {
    Tape t;
    const NodeId uniform = t.constant(Tensor({2, 4}));
    CHECK(t.value(t.softmax_cross_entropy(uniform, {1, 3})).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // one-hot with a large margin drives the loss toward zero
    Tensor sharp({1, 3}, {30.0, 0.0, 0.0});
    Tape t2;
    CHECK(t2.value(t2.softmax_cross_entropy(t2.constant(sharp), {0})).item() < 1e-12);

    Rng rng(31);
    Tensor logits = rand_tensor({4, 3}, rng, -2.0, 2.0);
    check_grads({logits}, [](Tape& t3, const std::vector<NodeId>& ids) {
        return t3.softmax_cross_entropy(ids[0], {0, 2, 1, 1});
    });
}

TEST_CASE("operations are deterministic") {
    Rng rng(41);
    Tensor x = rand_tensor({2, 4, 4, 4}, rng);
    Tensor w = rand_tensor({4, 4, 3, 3}, rng);
    auto run = [&]() {
        Tape t;
        return t.value(t.mean_all(t.batchnorm2d(t.conv2d(t.constant(x), t.constant(w), 1, 1))));
    };
    CHECK(run() == run());
}

}  // TEST_SUITE
