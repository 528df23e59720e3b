#pragma once

#include <vector>

#include "hypernas/archspace.hpp"
#include "hypernas/tape.hpp"

namespace hypernas {

struct EncoderDims {
    int layers = 6;
    int dim = 72;
};

// How inter-cell context enters each cell's initial node features: the
// preceding cell's pooled feature (default), or a learned per-position
// embedding (ablation variant).
enum class InjectionMode { CellFeature, PositionEmbedding };

// One role's encoder: op-embedding table plus per-layer forward/backward
// weight matrices. Normal and reduction cells use separate instances.
struct RoleEncoderParams {
    Tensor embed;                // [vocab index count, d]
    std::vector<Tensor> w_fwd;   // L x [d,d]
    std::vector<Tensor> w_bwd;   // L x [d,d]
};

struct EncoderParams {
    RoleEncoderParams normal;
    RoleEncoderParams reduction;
    Tensor positions;            // [N, d]; consulted only in position mode
    EncoderDims dims;
};

EncoderParams init_encoder_params(const SearchSpaceProfile& profile, EncoderDims dims, Rng& rng);

struct CellEncoding {
    Tensor node_features;  // [F, d]
    Tensor cell_feature;   // [1, d], mean over node rows
};

struct GlobalEncoding {
    Tensor h;  // [1, d], mean over the per-cell features
    std::vector<CellEncoding> cells;
};

// ---- tape-level API (used by training) ----

struct BoundRoleEncoder {
    NodeId embed = -1;
    std::vector<NodeId> w_fwd;
    std::vector<NodeId> w_bwd;
};

struct BoundEncoder {
    BoundRoleEncoder normal;
    BoundRoleEncoder reduction;
    NodeId positions = -1;
    EncoderDims dims;
};

BoundEncoder bind_encoder(Tape& t, const EncoderParams& p, bool trainable);

// One message-passing layer:
//   V' = 1/2 relu(E V W_fwd) + 1/2 relu(E^T V W_bwd)
NodeId gcn_layer_t(Tape& t, NodeId adj, NodeId adj_t, NodeId v, NodeId w_fwd, NodeId w_bwd);

struct CellEncodingNodes {
    NodeId node_features = -1;
    NodeId cell_feature = -1;
};

// inject < 0 means no context is added (the first cell's zero feature).
CellEncodingNodes encode_cell_t(Tape& t, const CellSpec& cell, const BoundRoleEncoder& role,
                                EncoderDims dims, NodeId inject);

struct EncodingNodes {
    NodeId h = -1;
    std::vector<CellEncodingNodes> cells;
};

EncodingNodes encode_architecture_t(Tape& t, const ArchitectureSpec& arch, const BoundEncoder& enc,
                                    InjectionMode mode);

// ---- value-level API (evaluation, search, export) ----

Tensor gcn_layer(const Tensor& adj, const Tensor& v, const Tensor& w_fwd, const Tensor& w_bwd);

CellEncoding encode_cell(const CellSpec& cell, CellRole role, const Tensor& z_prev,
                         const EncoderParams& params);

GlobalEncoding encode_architecture(const ArchitectureSpec& arch, const EncoderParams& params);

GlobalEncoding encode_with_positions(const ArchitectureSpec& arch, const EncoderParams& params,
                                     InjectionMode mode);

// Dense adjacency as a tensor ([F,F]) and its transpose, for tape constants.
Tensor adjacency_tensor(const CellSpec& cell);
Tensor adjacency_tensor_transposed(const CellSpec& cell);

}  // namespace hypernas
