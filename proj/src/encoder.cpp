#include "hypernas/encoder.hpp"

#include <stdexcept>

namespace hypernas {

EncoderParams init_encoder_params(const SearchSpaceProfile& profile, EncoderDims dims, Rng& rng) {
    EncoderParams p;
    p.dims = dims;
    const int64_t d = dims.dim;
    const int64_t rows = profile.vocab.index_count();
    auto init_role = [&](RoleEncoderParams& role, Rng r) {
        Rng re = r.child("embed");
        role.embed = random_uniform({rows, d}, -1.0 / std::sqrt(static_cast<double>(d)),
                                    1.0 / std::sqrt(static_cast<double>(d)), re);
        for (int l = 0; l < dims.layers; ++l) {
            Rng rf = r.child("fwd" + std::to_string(l));
            Rng rb = r.child("bwd" + std::to_string(l));
            role.w_fwd.push_back(glorot_uniform(d, d, rf));
            role.w_bwd.push_back(glorot_uniform(d, d, rb));
        }
    };
    init_role(p.normal, rng.child("normal"));
    init_role(p.reduction, rng.child("reduction"));
    Rng rp = rng.child("positions");
    p.positions = random_uniform({profile.N, d}, -1.0 / std::sqrt(static_cast<double>(d)),
                                 1.0 / std::sqrt(static_cast<double>(d)), rp);
    return p;
}

Tensor adjacency_tensor(const CellSpec& cell) {
    Tensor e({cell.F, cell.F});
    for (int i = 0; i < cell.F; ++i)
        for (int j = 0; j < cell.F; ++j)
            e.at(i, j) = cell.adj[static_cast<size_t>(i * cell.F + j)] ? 1.0 : 0.0;
    return e;
}

Tensor adjacency_tensor_transposed(const CellSpec& cell) {
    Tensor e({cell.F, cell.F});
    for (int i = 0; i < cell.F; ++i)
        for (int j = 0; j < cell.F; ++j)
            e.at(j, i) = cell.adj[static_cast<size_t>(i * cell.F + j)] ? 1.0 : 0.0;
    return e;
}

BoundEncoder bind_encoder(Tape& t, const EncoderParams& p, bool trainable) {
    auto bind_tensor = [&](const Tensor& v) { return trainable ? t.leaf(v) : t.constant(v); };
    auto bind_role = [&](const RoleEncoderParams& role) {
        BoundRoleEncoder b;
        b.embed = bind_tensor(role.embed);
        for (const auto& w : role.w_fwd) b.w_fwd.push_back(bind_tensor(w));
        for (const auto& w : role.w_bwd) b.w_bwd.push_back(bind_tensor(w));
        return b;
    };
    BoundEncoder b;
    b.normal = bind_role(p.normal);
    b.reduction = bind_role(p.reduction);
    b.positions = bind_tensor(p.positions);
    b.dims = p.dims;
    return b;
}

NodeId gcn_layer_t(Tape& t, NodeId adj, NodeId adj_t, NodeId v, NodeId w_fwd, NodeId w_bwd) {
    const NodeId fwd = t.relu(t.matmul(t.matmul(adj, v), w_fwd));
    const NodeId bwd = t.relu(t.matmul(t.matmul(adj_t, v), w_bwd));
    return t.add(t.scale(fwd, 0.5), t.scale(bwd, 0.5));
}

CellEncodingNodes encode_cell_t(Tape& t, const CellSpec& cell, const BoundRoleEncoder& role,
                                EncoderDims dims, NodeId inject) {
    const Tensor& table = t.value(role.embed);
    for (int op : cell.op_indices)
        if (op < 0 || op >= table.dim(0))
            throw std::out_of_range("encode_cell: op index " + std::to_string(op) +
                                    " outside vocabulary");
    NodeId v = t.gather_rows(role.embed, cell.op_indices);
    if (inject >= 0) v = t.add_rowvec(v, inject);
    const NodeId adj = t.constant(adjacency_tensor(cell));
    const NodeId adj_t = t.constant(adjacency_tensor_transposed(cell));
    for (int l = 0; l < dims.layers; ++l)
        v = gcn_layer_t(t, adj, adj_t, v, role.w_fwd[static_cast<size_t>(l)],
                        role.w_bwd[static_cast<size_t>(l)]);
    return CellEncodingNodes{v, t.mean_rows(v)};
}

EncodingNodes encode_architecture_t(Tape& t, const ArchitectureSpec& arch, const BoundEncoder& enc,
                                    InjectionMode mode) {
    if (arch.cells.empty()) throw std::invalid_argument("encode_architecture: empty architecture");
    if (arch.roles.size() != arch.cells.size())
        throw std::invalid_argument("encode_architecture: role list length mismatch");
    EncodingNodes out;
    NodeId z_prev = -1;  // the initial cell feature is zero; adding it is a no-op
    for (size_t i = 0; i < arch.cells.size(); ++i) {
        const BoundRoleEncoder& role =
            arch.roles[i] == CellRole::Normal ? enc.normal : enc.reduction;
        NodeId inject = -1;
        if (mode == InjectionMode::CellFeature) {
            inject = z_prev;
        } else {
            if (static_cast<int64_t>(i) >= t.value(enc.positions).dim(0))
                throw std::invalid_argument("encode_architecture: position table too small");
            inject = t.row(enc.positions, static_cast<int64_t>(i));
        }
        CellEncodingNodes cell = encode_cell_t(t, arch.cells[i], role, enc.dims, inject);
        z_prev = cell.cell_feature;
        out.cells.push_back(cell);
    }
    NodeId sum = out.cells[0].cell_feature;
    for (size_t i = 1; i < out.cells.size(); ++i) sum = t.add(sum, out.cells[i].cell_feature);
    out.h = t.scale(sum, 1.0 / static_cast<double>(out.cells.size()));
    return out;
}

// ---------------------------------------------------------------------------
// value-level wrappers
// ---------------------------------------------------------------------------

Tensor gcn_layer(const Tensor& adj, const Tensor& v, const Tensor& w_fwd, const Tensor& w_bwd) {
    Tensor adj_t({adj.dim(1), adj.dim(0)});
    for (int64_t i = 0; i < adj.dim(0); ++i)
        for (int64_t j = 0; j < adj.dim(1); ++j) adj_t.at(j, i) = adj.at(i, j);
    Tape t;
    const NodeId out = gcn_layer_t(t, t.constant(adj), t.constant(adj_t), t.constant(v),
                                   t.constant(w_fwd), t.constant(w_bwd));
    return t.value(out);
}

CellEncoding encode_cell(const CellSpec& cell, CellRole role, const Tensor& z_prev,
                         const EncoderParams& params) {
    z_prev.require_finite("encode_cell z_prev");
    Tape t;
    BoundEncoder enc = bind_encoder(t, params, false);
    const BoundRoleEncoder& r = role == CellRole::Normal ? enc.normal : enc.reduction;
    const NodeId inject = t.constant(z_prev);
    CellEncodingNodes nodes = encode_cell_t(t, cell, r, params.dims, inject);
    return CellEncoding{t.value(nodes.node_features), t.value(nodes.cell_feature)};
}

GlobalEncoding encode_with_positions(const ArchitectureSpec& arch, const EncoderParams& params,
                                     InjectionMode mode) {
    Tape t;
    BoundEncoder enc = bind_encoder(t, params, false);
    EncodingNodes nodes = encode_architecture_t(t, arch, enc, mode);
    GlobalEncoding out;
    out.h = t.value(nodes.h);
    for (const auto& c : nodes.cells)
        out.cells.push_back(CellEncoding{t.value(c.node_features), t.value(c.cell_feature)});
    return out;
}

GlobalEncoding encode_architecture(const ArchitectureSpec& arch, const EncoderParams& params) {
    return encode_with_positions(arch, params, InjectionMode::CellFeature);
}

}  // namespace hypernas
