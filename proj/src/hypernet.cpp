#include "hypernas/hypernet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hypernas {

namespace detail {
std::atomic<uint64_t> g_weight_generation_calls{0};
}

uint64_t weight_generation_call_count() { return detail::g_weight_generation_calls.load(); }

// ---------------------------------------------------------------------------
// auxiliary data
// ---------------------------------------------------------------------------

AuxBatch AuxDataset::make_batch(const std::vector<int>& indices) const {
    if (indices.empty()) throw std::invalid_argument("aux batch must have at least one sample");
    const int64_t ss = sample_size();
    AuxBatch b;
    b.inputs = Tensor({static_cast<int64_t>(indices.size()), channels, height, width});
    b.labels.reserve(indices.size());
    for (size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= count()) throw std::out_of_range("aux batch index out of range");
        const float* src = &images[static_cast<size_t>(idx) * static_cast<size_t>(ss)];
        double* dst = &b.inputs.data[i * static_cast<size_t>(ss)];
        for (int64_t k = 0; k < ss; ++k) dst[k] = static_cast<double>(src[k]);
        const uint32_t label = labels[static_cast<size_t>(idx)];
        if (label >= static_cast<uint32_t>(classes))
            throw std::runtime_error("aux dataset label outside class count");
        b.labels.push_back(static_cast<int>(label));
    }
    return b;
}

AuxBatch AuxDataset::sample_batch(int batch, Rng& rng) const {
    std::vector<int> idx(static_cast<size_t>(batch));
    for (int& i : idx) i = rng.uniform_int(count());
    return make_batch(idx);
}

AuxBatch AuxDataset::slice_batch(int start, int n) const {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = start + i;
    return make_batch(idx);
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void write_auxd(const std::string& path, const AuxDataset& ds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write("AUXD", 4);
    write_raw(out, static_cast<uint32_t>(ds.count()));
    write_raw(out, static_cast<uint32_t>(ds.channels));
    write_raw(out, static_cast<uint32_t>(ds.height));
    write_raw(out, static_cast<uint32_t>(ds.width));
    write_raw(out, static_cast<uint32_t>(ds.classes));
    const int64_t ss = ds.sample_size();
    for (int i = 0; i < ds.count(); ++i) {
        out.write(reinterpret_cast<const char*>(&ds.images[static_cast<size_t>(i) * static_cast<size_t>(ss)]),
                  static_cast<std::streamsize>(ss * static_cast<int64_t>(sizeof(float))));
        write_raw(out, ds.labels[static_cast<size_t>(i)]);
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

AuxDataset read_auxd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open aux dataset '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "AUXD", 4) != 0)
        throw std::runtime_error("'" + path + "' is not an AUXD file");
    uint32_t count = 0, channels = 0, height = 0, width = 0, classes = 0;
    read_raw(in, count);
    read_raw(in, channels);
    read_raw(in, height);
    read_raw(in, width);
    read_raw(in, classes);
    if (!in) throw std::runtime_error("truncated AUXD header in '" + path + "'");
    AuxDataset ds;
    ds.channels = static_cast<int>(channels);
    ds.height = static_cast<int>(height);
    ds.width = static_cast<int>(width);
    ds.classes = static_cast<int>(classes);
    const int64_t ss = ds.sample_size();
    ds.images.resize(static_cast<size_t>(count) * static_cast<size_t>(ss));
    ds.labels.resize(count);
    for (uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(&ds.images[static_cast<size_t>(i) * static_cast<size_t>(ss)]),
                static_cast<std::streamsize>(ss * static_cast<int64_t>(sizeof(float))));
        read_raw(in, ds.labels[i]);
    }
    if (!in) throw std::runtime_error("truncated AUXD payload in '" + path + "'");
    for (uint32_t l : ds.labels)
        if (l >= classes) throw std::runtime_error("AUXD label outside class count in '" + path + "'");
    return ds;
}

// ---------------------------------------------------------------------------
// hypernetwork
// ---------------------------------------------------------------------------

namespace {

int64_t conv_template_size(int width, int kernel) {
    return static_cast<int64_t>(width) * width * kernel * kernel;
}

std::vector<int64_t> conv_template_shape(int width, int kernel) {
    return {width, width, kernel, kernel};
}

}  // namespace

std::vector<HeadSpec> head_specs(const SearchSpaceProfile& profile) {
    std::vector<HeadSpec> specs(static_cast<size_t>(profile.vocab.head_count()));
    const std::vector<int> widths = profile.distinct_widths();
    for (const auto& op : profile.vocab.ops) {
        if (op.kind != OpKind::Parametric) continue;
        int64_t slot = 0;
        for (int w : widths) slot = std::max(slot, conv_template_size(w, op.kernel));
        specs[static_cast<size_t>(op.head)] = HeadSpec{slot, op.name};
    }
    for (const auto& s : specs)
        if (s.slot <= 0) throw std::logic_error("head with no parametric op");
    return specs;
}

HypernetParams init_hypernet_params(const SearchSpaceProfile& profile, int encoder_dim,
                                    HypernetDims dims, Rng& rng) {
    HypernetParams p;
    int in = encoder_dim;
    for (int l = 0; l < dims.layers; ++l) {
        Rng rl = rng.child("trunk" + std::to_string(l));
        p.w.push_back(glorot_uniform(in, dims.hidden, rl));
        p.b.push_back(Tensor::zeros({1, dims.hidden}));
        in = dims.hidden;
    }
    for (const auto& spec : head_specs(profile)) {
        Rng rh = rng.child("head-" + spec.label);
        p.head_w.push_back(glorot_uniform(dims.hidden, spec.slot, rh));
        p.head_b.push_back(Tensor::zeros({1, spec.slot}));
    }
    return p;
}

BoundHypernet bind_hypernet(Tape& t, const HypernetParams& p, bool trainable) {
    auto bind = [&](const Tensor& v) { return trainable ? t.leaf(v) : t.constant(v); };
    BoundHypernet b;
    for (const auto& w : p.w) b.w.push_back(bind(w));
    for (const auto& bias : p.b) b.b.push_back(bind(bias));
    for (const auto& w : p.head_w) b.head_w.push_back(bind(w));
    for (const auto& bias : p.head_b) b.head_b.push_back(bind(bias));
    return b;
}

std::vector<WeightSlot> weight_slots(const ArchitectureSpec& arch,
                                     const SearchSpaceProfile& profile) {
    std::vector<WeightSlot> slots;
    for (int ci = 0; ci < arch.cell_count(); ++ci) {
        const CellSpec& cell = arch.cells[static_cast<size_t>(ci)];
        const int width = profile.width_at(ci + 1);
        for (int v = 1; v < cell.F - 1; ++v) {
            const int op_idx = cell.op_indices[static_cast<size_t>(v)];
            const OpDef& op = profile.vocab.ops[static_cast<size_t>(op_idx)];
            if (op.kind != OpKind::Parametric) continue;
            slots.push_back(WeightSlot{ci, v, op.head, conv_template_shape(width, op.kernel)});
        }
    }
    return slots;
}

const Tensor* GeneratedWeights::find(int cell, int node) const {
    for (size_t i = 0; i < slots.size(); ++i)
        if (slots[i].cell == cell && slots[i].node == node) return &tensors[i];
    return nullptr;
}

std::vector<NodeId> generate_weights_t(Tape& t, const ArchitectureSpec& arch,
                                       const SearchSpaceProfile& profile,
                                       const std::vector<CellEncodingNodes>& cells,
                                       const BoundHypernet& hyper) {
    detail::g_weight_generation_calls.fetch_add(1, std::memory_order_relaxed);
    if (cells.size() != arch.cells.size())
        throw std::invalid_argument("generate_weights: encoding does not match architecture");
    const std::vector<HeadSpec> specs = head_specs(profile);
    std::vector<NodeId> out;
    for (const WeightSlot& slot : weight_slots(arch, profile)) {
        const int64_t need = Tensor::count(slot.shape);
        const int64_t have = specs[static_cast<size_t>(slot.head)].slot;
        if (need > have)
            throw std::logic_error("head slot " + std::to_string(have) +
                                   " smaller than weight template " + std::to_string(need));
        NodeId v = t.row(cells[static_cast<size_t>(slot.cell)].node_features, slot.node);
        for (size_t l = 0; l < hyper.w.size(); ++l)
            v = t.relu(t.add_rowvec(t.matmul(v, hyper.w[l]), hyper.b[l]));
        NodeId raw = t.add_rowvec(t.matmul(v, hyper.head_w[static_cast<size_t>(slot.head)]),
                                  hyper.head_b[static_cast<size_t>(slot.head)]);
        raw = t.reshape(raw, {have});
        // Fixed head output, reshaped and sliced down to this node's template.
        NodeId w = need == have ? raw : t.take_prefix(raw, need);
        out.push_back(t.reshape(w, slot.shape));
    }
    return out;
}

GeneratedWeights generate_weights(const GlobalEncoding& encoding, const HypernetParams& params,
                                  const ArchitectureSpec& arch, const SearchSpaceProfile& profile) {
    Tape t;
    BoundHypernet hyper = bind_hypernet(t, params, false);
    std::vector<CellEncodingNodes> cells;
    for (const auto& c : encoding.cells)
        cells.push_back(CellEncodingNodes{t.constant(c.node_features), t.constant(c.cell_feature)});
    const std::vector<NodeId> nodes = generate_weights_t(t, arch, profile, cells, hyper);
    GeneratedWeights out;
    out.slots = weight_slots(arch, profile);
    for (NodeId n : nodes) out.tensors.push_back(t.value(n));
    return out;
}

// ---------------------------------------------------------------------------
// target network
// ---------------------------------------------------------------------------

TargetPlan build_target_plan(const ArchitectureSpec& arch, const SearchSpaceProfile& profile,
                             int in_channels, int classes) {
    TargetPlan plan;
    plan.in_channels = in_channels;
    plan.stem_channels = profile.stem_channels;
    plan.classes = classes;
    const std::vector<WeightSlot> slots = weight_slots(arch, profile);
    for (int ci = 0; ci < arch.cell_count(); ++ci) {
        const CellSpec& cell = arch.cells[static_cast<size_t>(ci)];
        TargetCellPlan cp;
        cp.reduction = arch.roles[static_cast<size_t>(ci)] == CellRole::Reduction;
        cp.width = profile.width_at(ci + 1);
        for (int v = 0; v < cell.F; ++v) {
            TargetNodePlan np;
            for (int i = 0; i < v; ++i)
                if (cell.edge(i, v)) np.inputs.push_back(i);
            const int op_idx = cell.op_indices[static_cast<size_t>(v)];
            if (v == 0 || v == cell.F - 1) {
                np.sem = OpSemantic::Skip;  // markers carry no computation of their own
            } else {
                const OpDef& op = profile.vocab.ops[static_cast<size_t>(op_idx)];
                np.sem = op.semantic;
                np.kernel = op.kernel;
                if (op.kind == OpKind::Parametric) {
                    for (size_t s = 0; s < slots.size(); ++s)
                        if (slots[s].cell == ci && slots[s].node == v) np.slot = static_cast<int>(s);
                }
            }
            cp.nodes.push_back(std::move(np));
        }
        plan.cells.push_back(std::move(cp));
    }
    plan.gap_channels = profile.width_at(arch.cell_count());
    return plan;
}

NodeId target_forward_t(Tape& t, const TargetPlan& plan, const std::vector<WeightSlot>& slots,
                        const std::vector<NodeId>& weight_nodes, NodeId stem_w, NodeId cls_w,
                        NodeId images) {
    if (weight_nodes.size() != slots.size())
        throw std::invalid_argument("target_forward: weight set incomplete (" +
                                    std::to_string(weight_nodes.size()) + " of " +
                                    std::to_string(slots.size()) + " slots)");
    for (size_t s = 0; s < slots.size(); ++s)
        if (t.value(weight_nodes[s]).shape != slots[s].shape)
            throw std::invalid_argument("target_forward: weight " + std::to_string(s) +
                                        " has shape " + t.value(weight_nodes[s]).shape_str() +
                                        ", template wants another");
    NodeId x = t.conv2d(images, stem_w, 1, 0);  // 1x1 stem, fixed weights
    for (const TargetCellPlan& cp : plan.cells) {
        NodeId cell_in = x;
        if (cp.reduction) cell_in = t.channel_dup(t.avgpool2d(cell_in, 2, 2, 0, 0));
        std::vector<NodeId> node_out(cp.nodes.size(), -1);
        node_out[0] = cell_in;
        for (size_t v = 1; v < cp.nodes.size(); ++v) {
            const TargetNodePlan& np = cp.nodes[v];
            if (np.inputs.empty())
                throw std::logic_error("target_forward: node with no inputs in a validated cell");
            NodeId s = node_out[static_cast<size_t>(np.inputs[0])];
            for (size_t i = 1; i < np.inputs.size(); ++i)
                s = t.add(s, node_out[static_cast<size_t>(np.inputs[i])]);
            switch (np.sem) {
                case OpSemantic::Conv:
                    s = t.relu(t.batchnorm2d(t.conv2d(s, weight_nodes[static_cast<size_t>(np.slot)],
                                                      1, np.kernel / 2)));
                    break;
                case OpSemantic::Skip:
                    break;
                case OpSemantic::AvgPool:
                    s = t.avgpool2d(s, np.kernel, 1, (np.kernel - 1) / 2, np.kernel / 2);
                    break;
                case OpSemantic::MaxPool:
                    s = t.maxpool2d(s, np.kernel, 1, (np.kernel - 1) / 2, np.kernel / 2);
                    break;
                case OpSemantic::Zero:
                    s = t.zeros_like_of(s);
                    break;
            }
            node_out[v] = s;
        }
        x = node_out.back();
    }
    return t.matmul(t.global_avg_pool(x), cls_w);
}

Tensor fixed_stem_weights(const SearchSpaceProfile& profile, int in_channels) {
    Rng rng(fnv1a64("target-stem") ^ fnv1a64_u64(static_cast<uint64_t>(in_channels),
                                                 fnv1a64_u64(static_cast<uint64_t>(profile.stem_channels))));
    return he_normal_conv(profile.stem_channels, in_channels, 1, rng);
}

Tensor fixed_classifier_weights(const SearchSpaceProfile& profile, int gap_channels, int classes) {
    Rng rng(fnv1a64("target-classifier") ^ fnv1a64_u64(static_cast<uint64_t>(gap_channels),
                                                       fnv1a64_u64(static_cast<uint64_t>(classes))));
    (void)profile;
    return glorot_uniform(gap_channels, classes, rng);
}

TargetNetwork::TargetNetwork(TargetPlan plan, std::vector<WeightSlot> slots,
                             std::vector<Tensor> weights, Tensor stem_w, Tensor cls_w)
    : plan_(std::move(plan)),
      slots_(std::move(slots)),
      weights_(std::move(weights)),
      stem_w_(std::move(stem_w)),
      cls_w_(std::move(cls_w)) {
    if (weights_.size() != slots_.size())
        throw std::invalid_argument("target network: weight set incomplete");
    for (size_t i = 0; i < slots_.size(); ++i)
        if (weights_[i].shape != slots_[i].shape)
            throw std::invalid_argument("target network: weight " + std::to_string(i) +
                                        " shape " + weights_[i].shape_str() + " mismatches template");
}

Tensor TargetNetwork::forward(const Tensor& images) const {
    Tape t;
    std::vector<NodeId> wn;
    wn.reserve(weights_.size());
    for (const auto& w : weights_) wn.push_back(t.constant(w));
    const NodeId logits = target_forward_t(t, plan_, slots_, wn, t.constant(stem_w_),
                                           t.constant(cls_w_), t.constant(images));
    return t.value(logits);
}

double TargetNetwork::accuracy(const AuxDataset& ds, int batch) const {
    int correct = 0;
    for (int start = 0; start < ds.count(); start += batch) {
        const int n = std::min(batch, ds.count() - start);
        const AuxBatch b = ds.slice_batch(start, n);
        const Tensor logits = forward(b.inputs);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int c = 1; c < ds.classes; ++c)
                if (logits.at(i, c) > logits.at(i, best)) best = c;  // ties keep the lowest class
            if (best == b.labels[static_cast<size_t>(i)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.count());
}

TargetNetwork build_target(const ArchitectureSpec& arch, const GeneratedWeights& weights,
                           const SearchSpaceProfile& profile, int in_channels, int classes) {
    TargetPlan plan = build_target_plan(arch, profile, in_channels, classes);
    const int gap = plan.gap_channels;
    return TargetNetwork(std::move(plan), weights.slots, weights.tensors,
                         fixed_stem_weights(profile, in_channels),
                         fixed_classifier_weights(profile, gap, classes));
}

NodeId hyper_loss_t(Tape& t, const TargetPlan& plan, const std::vector<WeightSlot>& slots,
                    const std::vector<NodeId>& weight_nodes, NodeId stem_w, NodeId cls_w,
                    const AuxBatch& batch) {
    const NodeId logits = target_forward_t(t, plan, slots, weight_nodes, stem_w, cls_w,
                                           t.constant(batch.inputs));
    return t.softmax_cross_entropy(logits, batch.labels);
}

double hyper_loss(const ArchitectureSpec& arch, const GlobalEncoding& encoding,
                  const HypernetParams& params, const SearchSpaceProfile& profile,
                  const AuxBatch& batch, int classes) {
    const GeneratedWeights gw = generate_weights(encoding, params, arch, profile);
    const TargetNetwork net = build_target(arch, gw, profile, static_cast<int>(batch.inputs.dim(1)),
                                           classes);
    Tape t;
    const NodeId loss = t.softmax_cross_entropy(t.constant(net.forward(batch.inputs)), batch.labels);
    return t.value(loss).item();
}

}  // namespace hypernas
