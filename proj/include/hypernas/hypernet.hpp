#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "hypernas/archspace.hpp"
#include "hypernas/encoder.hpp"
#include "hypernas/tape.hpp"

namespace hypernas {

// ---------------------------------------------------------------------------
// auxiliary data
// ---------------------------------------------------------------------------

struct AuxBatch {
    Tensor inputs;            // [B, C, H, W]
    std::vector<int> labels;  // length B, each < class count
};

struct AuxDataset {
    int channels = 0, height = 0, width = 0, classes = 0;
    std::vector<float> images;  // sample-major, C*H*W floats per sample
    std::vector<uint32_t> labels;

    int count() const { return static_cast<int>(labels.size()); }
    int64_t sample_size() const {
        return static_cast<int64_t>(channels) * height * width;
    }

    AuxBatch make_batch(const std::vector<int>& indices) const;
    AuxBatch sample_batch(int batch, Rng& rng) const;  // uniform with replacement
    AuxBatch slice_batch(int start, int count) const;
};

// AUXD container: magic "AUXD", then u32 sample count, channels, height,
// width, class count; per sample C*H*W f32 values then a u32 label.
// Little-endian throughout.
AuxDataset read_auxd(const std::string& path);
void write_auxd(const std::string& path, const AuxDataset& ds);

// ---------------------------------------------------------------------------
// hypernetwork
// ---------------------------------------------------------------------------

struct HypernetDims {
    int hidden = 96;  // trunk width and output dimension
    int layers = 3;   // trunk depth
};

// Shared MLP trunk plus one output head per parametric op. Head outputs have
// a fixed width (the largest weight template the op can take anywhere in the
// macro layout); smaller instantiations are sliced from the prefix.
struct HypernetParams {
    std::vector<Tensor> w;  // trunk weights, layer 0 maps d -> hidden
    std::vector<Tensor> b;
    std::vector<Tensor> head_w;  // per head: [hidden, slot]
    std::vector<Tensor> head_b;  // per head: [1, slot]
};

struct HeadSpec {
    int64_t slot = 0;
    std::string label;
};

std::vector<HeadSpec> head_specs(const SearchSpaceProfile& profile);

HypernetParams init_hypernet_params(const SearchSpaceProfile& profile, int encoder_dim,
                                    HypernetDims dims, Rng& rng);

struct BoundHypernet {
    std::vector<NodeId> w, b, head_w, head_b;
};

BoundHypernet bind_hypernet(Tape& t, const HypernetParams& p, bool trainable);

// One generated weight: which node it belongs to and its template shape.
struct WeightSlot {
    int cell = 0;  // 0-based cell index
    int node = 0;
    int head = 0;
    std::vector<int64_t> shape;  // conv template [out, in, k, k]
};

// Deterministic list of every parametric node in the architecture, in
// (cell, node) order. The same list indexes generated and trained weights.
std::vector<WeightSlot> weight_slots(const ArchitectureSpec& arch,
                                     const SearchSpaceProfile& profile);

struct GeneratedWeights {
    std::vector<WeightSlot> slots;
    std::vector<Tensor> tensors;  // aligned with slots

    const Tensor* find(int cell, int node) const;
};

// Tape-level generation: node_features are the encoder outputs per cell
// ([F,d] nodes). Returns weight nodes aligned with weight_slots().
std::vector<NodeId> generate_weights_t(Tape& t, const ArchitectureSpec& arch,
                                       const SearchSpaceProfile& profile,
                                       const std::vector<CellEncodingNodes>& cells,
                                       const BoundHypernet& hyper);

GeneratedWeights generate_weights(const GlobalEncoding& encoding, const HypernetParams& params,
                                  const ArchitectureSpec& arch, const SearchSpaceProfile& profile);

// ---------------------------------------------------------------------------
// target network
// ---------------------------------------------------------------------------

struct TargetNodePlan {
    OpSemantic sem = OpSemantic::Skip;
    int kernel = 0;
    int slot = -1;  // index into weight_slots, -1 for parameter-free ops
    std::vector<int> inputs;
};

struct TargetCellPlan {
    bool reduction = false;
    int width = 0;  // channel count of the ops inside this cell
    std::vector<TargetNodePlan> nodes;
};

// Execution plan for an architecture: stem conv, the cell DAGs, and the
// classifier head. Spatial size halves and channels double at each
// reduction cell (handled at the reduction cell's input node).
struct TargetPlan {
    std::vector<TargetCellPlan> cells;
    int in_channels = 0;
    int stem_channels = 0;
    int gap_channels = 0;
    int classes = 0;
};

TargetPlan build_target_plan(const ArchitectureSpec& arch, const SearchSpaceProfile& profile,
                             int in_channels, int classes);

// Forward pass on the tape. weight_nodes is aligned with weight_slots(); every
// parametric node must have a weight of exactly its template shape.
NodeId target_forward_t(Tape& t, const TargetPlan& plan, const std::vector<WeightSlot>& slots,
                        const std::vector<NodeId>& weight_nodes, NodeId stem_w, NodeId cls_w,
                        NodeId images);

// Deterministic fixed (never trained by the dual-task loop) stem and
// classifier weights, shared by every architecture.
Tensor fixed_stem_weights(const SearchSpaceProfile& profile, int in_channels);
Tensor fixed_classifier_weights(const SearchSpaceProfile& profile, int gap_channels, int classes);

// Value-level executable network realizing the DAG semantics.
class TargetNetwork {
public:
    TargetNetwork(TargetPlan plan, std::vector<WeightSlot> slots, std::vector<Tensor> weights,
                  Tensor stem_w, Tensor cls_w);

    Tensor forward(const Tensor& images) const;  // logits [B, classes]
    // Classification accuracy over the dataset, evaluated in fixed-size
    // batches (batch statistics make the result batching-dependent).
    double accuracy(const AuxDataset& ds, int batch) const;

    const TargetPlan& plan() const { return plan_; }

private:
    TargetPlan plan_;
    std::vector<WeightSlot> slots_;
    std::vector<Tensor> weights_;
    Tensor stem_w_;
    Tensor cls_w_;
};

TargetNetwork build_target(const ArchitectureSpec& arch, const GeneratedWeights& weights,
                           const SearchSpaceProfile& profile, int in_channels, int classes);

// Mean cross-entropy of the generated-weight target network on the batch.
NodeId hyper_loss_t(Tape& t, const TargetPlan& plan, const std::vector<WeightSlot>& slots,
                    const std::vector<NodeId>& weight_nodes, NodeId stem_w, NodeId cls_w,
                    const AuxBatch& batch);

double hyper_loss(const ArchitectureSpec& arch, const GlobalEncoding& encoding,
                  const HypernetParams& params, const SearchSpaceProfile& profile,
                  const AuxBatch& batch, int classes);

// Counts generate_weights/hyper_loss invocations; the search module asserts
// it never advances during inference-time search.
uint64_t weight_generation_call_count();

namespace detail {
extern std::atomic<uint64_t> g_weight_generation_calls;
}

}  // namespace hypernas
