#include <doctest.h>

#include <cmath>

#include "hypernas/encoder.hpp"
#include "hypernas/model.hpp"
#include "oracles.hpp"

using namespace hypernas;

namespace {

EncoderParams small_params(const SearchSpaceProfile& profile, uint64_t seed, int layers = 2,
                           int dim = 8) {
    Rng rng(seed);
    return init_encoder_params(profile, EncoderDims{layers, dim}, rng);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("gcn_layer zero adjacency gives zero output") {
    Rng rng(1);
    const Tensor e({3, 3});
    const Tensor v = random_uniform({3, 4}, -1, 1, rng);
    const Tensor w1 = random_uniform({4, 4}, -1, 1, rng);
    const Tensor w2 = random_uniform({4, 4}, -1, 1, rng);
    const Tensor out = gcn_layer(e, v, w1, w2);
    for (double x : out.data) CHECK(x == 0.0);
}

TEST_CASE("gcn_layer hand-checked two-node case") {
    const Tensor e({2, 2}, {0, 1, 0, 0});
    const Tensor v({2, 2}, {1, 0, 0, 1});
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor out = gcn_layer(e, v, eye, eye);
    CHECK(out == Tensor({2, 2}, {0, 0.5, 0.5, 0}));
}

TEST_CASE("gcn_layer matches the dense-loop reference") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const CellSpec cell = sample_cell(profile, rng);
        const Tensor e = adjacency_tensor(cell);
        const Tensor v = random_uniform({profile.F, 6}, -1, 1, rng);
        const Tensor w1 = random_uniform({6, 6}, -1, 1, rng);
        const Tensor w2 = random_uniform({6, 6}, -1, 1, rng);
        CHECK(max_abs_diff(gcn_layer(e, v, w1, w2),
                           oracles::gcn_layer_reference(e, v, w1, w2)) < 1e-12);
    }
}

TEST_CASE("encode_cell zero context and zero embeddings give zero features") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    EncoderParams params = small_params(profile, 3);
    for (double& v : params.normal.embed.data) v = 0.0;
    Rng rng(4);
    const CellSpec cell = sample_cell(profile, rng);
    const CellEncoding enc =
        encode_cell(cell, CellRole::Normal, Tensor({1, params.dims.dim}), params);
    for (double v : enc.cell_feature.data) CHECK(v == 0.0);
    for (double v : enc.node_features.data) CHECK(v == 0.0);
}

TEST_CASE("encode_cell responds to the injected context") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const EncoderParams params = small_params(profile, 6);
    Rng rng(7);
    const CellSpec cell = sample_cell(profile, rng);
    const Tensor z0({1, params.dims.dim});
    Tensor z1 = random_uniform({1, params.dims.dim}, -1, 1, rng);
    const CellEncoding a = encode_cell(cell, CellRole::Normal, z0, params);
    const CellEncoding b = encode_cell(cell, CellRole::Normal, z1, params);
    CHECK(max_abs_diff(a.cell_feature, b.cell_feature) > 1e-9);
}

TEST_CASE("encode_cell context Jacobian matches finite differences") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const EncoderParams params = small_params(profile, 8);
    Rng rng(9);
    const CellSpec cell = sample_cell(profile, rng);
    Tensor z_prev = random_uniform({1, params.dims.dim}, -0.5, 0.5, rng);
    const Tensor dir = random_uniform({1, params.dims.dim}, -1, 1, rng);

    // directional derivative of <z, dir> w.r.t. every z_prev coordinate
    auto eval = [&]() {
        const CellEncoding enc = encode_cell(cell, CellRole::Normal, z_prev, params);
        double acc = 0.0;
        for (size_t i = 0; i < dir.data.size(); ++i) acc += enc.cell_feature.data[i] * dir.data[i];
        return acc;
    };

    Tape t;
    const BoundEncoder enc = bind_encoder(t, params, false);
    const NodeId inject = t.leaf(z_prev);
    const CellEncodingNodes nodes = encode_cell_t(t, cell, enc.normal, params.dims, inject);
    t.backward(t.sum_all(t.mul(nodes.cell_feature, t.constant(dir))));
    const Tensor analytic = t.grad(inject);

    for (int64_t k = 0; k < z_prev.size(); ++k) {
        const double numeric = oracles::central_diff(eval, z_prev, k);
        CHECK(oracles::grad_close(analytic.at(k), numeric, 1e-4));
    }
}

TEST_CASE("encode_architecture of a single cell returns that cell's feature") {
    SearchSpaceProfile profile = micro_profile_with_layout(1);
    const EncoderParams params = small_params(profile, 10);
    Rng rng(11);
    const ArchitectureSpec arch = sample_random(profile, rng);
    const GlobalEncoding enc = encode_architecture(arch, params);
    REQUIRE(enc.cells.size() == 1);
    CHECK(enc.h == enc.cells[0].cell_feature);
}

TEST_CASE("sequential encoding is causal in the cell index") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const EncoderParams params = small_params(profile, 12);
    Rng rng(13);
    for (int trial = 0; trial < 10; ++trial) {
        ArchitectureSpec arch = sample_random(profile, rng);
        const GlobalEncoding before = encode_architecture(arch, params);
        const int j = 1 + rng.uniform_int(profile.N - 1);  // edit cell j (1-based), j >= 2
        ArchitectureSpec edited = arch;
        if (edited.roles[static_cast<size_t>(j)] == CellRole::Normal)
            edited.cells[static_cast<size_t>(j)] = sample_cell(profile, rng);
        else
            edited.cells[static_cast<size_t>(j)].set_edge(0, profile.F - 1,
                                                          !edited.cells[static_cast<size_t>(j)].edge(0, profile.F - 1));
        const GlobalEncoding after = encode_architecture(edited, params);
        for (int i = 0; i < j; ++i) {
            CHECK(before.cells[static_cast<size_t>(i)].cell_feature ==
                  after.cells[static_cast<size_t>(i)].cell_feature);
            CHECK(before.cells[static_cast<size_t>(i)].node_features ==
                  after.cells[static_cast<size_t>(i)].node_features);
        }
    }
}

TEST_CASE("identical stacked cells get distinct features") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const EncoderParams params = small_params(profile, 14);
    Rng rng(15);
    const ArchitectureSpec arch = sample_random(profile, rng);
    // cells 1 and 2 share the same CellSpec; preceding-feature injection
    // still separates them
    const GlobalEncoding enc = encode_architecture(arch, params);
    REQUIRE(arch.cells[0] == arch.cells[1]);
    CHECK(max_abs_diff(enc.cells[0].cell_feature, enc.cells[1].cell_feature) > 1e-9);
}

TEST_CASE("cell order changes the embedding") {
    SearchSpaceProfile profile = builtin_profile("micro");
    profile.template_shared = false;  // stack three distinct normal cells
    profile.N = 3;
    profile.reduction_positions.clear();
    int differing = 0;
    for (int trial = 0; trial < 30; ++trial) {
        Rng rng(100 + static_cast<uint64_t>(trial));
        const EncoderParams params = small_params(profile, 200 + static_cast<uint64_t>(trial));
        ArchitectureSpec arch;
        arch.roles = {CellRole::Normal, CellRole::Normal, CellRole::Normal};
        CellSpec a = sample_cell(profile, rng);
        CellSpec b = sample_cell(profile, rng);
        while (b == a) b = sample_cell(profile, rng);
        CellSpec c = sample_cell(profile, rng);
        arch.cells = {a, b, c};
        ArchitectureSpec swapped = arch;
        std::swap(swapped.cells[0], swapped.cells[1]);
        const GlobalEncoding e1 = encode_architecture(arch, params);
        const GlobalEncoding e2 = encode_architecture(swapped, params);
        if (max_abs_diff(e1.h, e2.h) > 1e-12) ++differing;
    }
    CHECK(differing == 30);
}

TEST_CASE("construction invariants hold") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const EncoderParams params = small_params(profile, 16);
    Rng rng(17);
    const ArchitectureSpec arch = sample_random(profile, rng);
    const GlobalEncoding enc = encode_architecture(arch, params);
    const int64_t d = params.dims.dim;
    // z equals the row mean of the node features
    for (const auto& cell : enc.cells) {
        for (int64_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (int64_t i = 0; i < profile.F; ++i) mean += cell.node_features.at(i, j);
            mean /= static_cast<double>(profile.F);
            CHECK(std::fabs(cell.cell_feature.at(0, j) - mean) < 1e-12);
        }
        CHECK(cell.node_features.all_finite());
    }
    // h equals the mean of the cell features
    for (int64_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& cell : enc.cells) mean += cell.cell_feature.at(0, j);
        mean /= static_cast<double>(enc.cells.size());
        CHECK(std::fabs(enc.h.at(0, j) - mean) < 1e-12);
    }
}

TEST_CASE("position mode matches cell-feature mode in degenerate cases") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const EncoderParams params = small_params(profile, 18);
    Rng rng(19);
    const ArchitectureSpec arch = sample_random(profile, rng);

    // mode=cell-feature is exactly encode_architecture
    const GlobalEncoding a = encode_architecture(arch, params);
    const GlobalEncoding b = encode_with_positions(arch, params, InjectionMode::CellFeature);
    CHECK(a.h == b.h);

    // N=1 with a zero position-0 embedding equals cell-feature mode
    SearchSpaceProfile single = micro_profile_with_layout(1);
    EncoderParams p1 = small_params(single, 20);
    for (int64_t j = 0; j < p1.positions.dim(1); ++j) p1.positions.at(0, j) = 0.0;
    Rng rng2(21);
    const ArchitectureSpec arch1 = sample_random(single, rng2);
    CHECK(encode_with_positions(arch1, p1, InjectionMode::PositionEmbedding).h ==
          encode_architecture(arch1, p1).h);
}

TEST_CASE("gradients of h match finite differences for every encoder tensor") {
    const SearchSpaceProfile profile = micro_profile_with_layout(2);
    EncoderParams params = small_params(profile, 22, 2, 6);
    Rng rng(23);
    const ArchitectureSpec arch = sample_random(profile, rng);
    const Tensor dir = random_uniform({1, params.dims.dim}, -1, 1, rng);

    auto eval = [&]() {
        const GlobalEncoding enc = encode_architecture(arch, params);
        double acc = 0.0;
        for (size_t i = 0; i < dir.data.size(); ++i) acc += enc.h.data[i] * dir.data[i];
        return acc;
    };

    Tape t;
    const BoundEncoder bound = bind_encoder(t, params, true);
    const EncodingNodes nodes = encode_architecture_t(t, arch, bound, InjectionMode::CellFeature);
    t.backward(t.sum_all(t.mul(nodes.h, t.constant(dir))));

    auto check_tensor = [&](Tensor& value, NodeId id) {
        const Tensor analytic = t.grad(id);
        Rng pick(value.size() * 31 + 7);
        for (int s = 0; s < 4; ++s) {
            const int64_t k = pick.uniform_int(static_cast<int>(value.size()));
            const double numeric = oracles::central_diff(eval, value, k);
            CHECK(oracles::grad_close(analytic.at(k), numeric, 1e-4));
        }
    };
    check_tensor(params.normal.embed, bound.normal.embed);
    check_tensor(params.reduction.embed, bound.reduction.embed);
    for (size_t l = 0; l < params.normal.w_fwd.size(); ++l) {
        check_tensor(params.normal.w_fwd[l], bound.normal.w_fwd[l]);
        check_tensor(params.normal.w_bwd[l], bound.normal.w_bwd[l]);
        check_tensor(params.reduction.w_fwd[l], bound.reduction.w_fwd[l]);
        check_tensor(params.reduction.w_bwd[l], bound.reduction.w_bwd[l]);
    }
}

}  // TEST_SUITE
