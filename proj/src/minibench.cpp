#include "hypernas/minibench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

namespace hypernas {

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

namespace {

// +1/-1 square wave of the given period, shifted by phase.
inline float wave(int x, int period, int phase) {
    return ((x + phase) / (period / 2)) % 2 == 0 ? 1.0f : -1.0f;
}

}  // namespace

std::vector<std::vector<float>> class_templates(const SynthDatasetSpec& spec, int cls) {
    if (cls < 0 || cls >= spec.classes) throw std::invalid_argument("class index out of range");
    const int H = spec.height, W = spec.width, C = spec.channels;
    const size_t sz = static_cast<size_t>(C) * H * W;
    std::vector<std::vector<float>> variants;
    auto make = [&](auto&& pixel) {
        std::vector<float> img(sz);
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j)
                    img[static_cast<size_t>((c * H + i) * W + j)] = pixel(i, j);
        variants.push_back(std::move(img));
    };
    // Four base families: horizontal bars, vertical bars, fine checker,
    // coarse checker. Classes beyond four reuse the families with a longer
    // period so any class count stays generable.
    const int family = cls % 4;
    const int period = 4 + 4 * (cls / 4);
    switch (family) {
        case 0:
            for (int ph = 0; ph < period; ++ph)
                make([&](int i, int) { return wave(i, period, ph); });
            break;
        case 1:
            for (int ph = 0; ph < period; ++ph)
                make([&](int, int j) { return wave(j, period, ph); });
            break;
        case 2:
            for (int ph = 0; ph < 2; ++ph)
                make([&](int i, int j) { return (i + j + ph) % 2 == 0 ? 1.0f : -1.0f; });
            break;
        case 3:
        default:
            for (int pi = 0; pi < 2; ++pi)
                for (int pj = 0; pj < 2; ++pj)
                    make([&](int i, int j) {
                        return ((i + pi) / 2 + (j + pj) / 2) % 2 == 0 ? 1.0f : -1.0f;
                    });
            break;
    }
    return variants;
}

namespace {

AuxDataset generate_split(const SynthDatasetSpec& spec, int count, Rng rng,
                          const std::vector<std::vector<std::vector<float>>>& templates) {
    AuxDataset ds;
    ds.channels = spec.channels;
    ds.height = spec.height;
    ds.width = spec.width;
    ds.classes = spec.classes;
    const size_t sz = static_cast<size_t>(spec.channels) * spec.height * spec.width;
    ds.images.resize(static_cast<size_t>(count) * sz);
    ds.labels.resize(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int cls = i % spec.classes;  // uniform class priors by construction
        const auto& variants = templates[static_cast<size_t>(cls)];
        const auto& tpl = variants[static_cast<size_t>(rng.uniform_int(static_cast<int>(variants.size())))];
        float* dst = &ds.images[static_cast<size_t>(i) * sz];
        for (size_t k = 0; k < sz; ++k)
            dst[k] = tpl[k] + static_cast<float>(spec.sigma * rng.normal());
        ds.labels[static_cast<size_t>(i)] = static_cast<uint32_t>(cls);
    }
    return ds;
}

}  // namespace

SynthDataset generate_dataset(const SynthDatasetSpec& spec) {
    if (spec.classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    std::vector<std::vector<std::vector<float>>> templates;
    for (int c = 0; c < spec.classes; ++c) templates.push_back(class_templates(spec, c));
    Rng root(spec.seed);
    SynthDataset out;
    out.train = generate_split(spec, spec.train_count, root.child("train"), templates);
    out.val = generate_split(spec, spec.val_count, root.child("val"), templates);
    return out;
}

std::pair<std::string, std::string> write_dataset(const std::string& dir, const SynthDataset& ds) {
    const std::string train_path = dir + "/aux_train.auxd";
    const std::string val_path = dir + "/aux_val.auxd";
    write_auxd(train_path, ds.train);
    write_auxd(val_path, ds.val);
    return {train_path, val_path};
}

// ---------------------------------------------------------------------------
// ground truth
// ---------------------------------------------------------------------------

GroundTruthResult ground_truth(const ArchitectureSpec& arch, const SearchSpaceProfile& profile,
                               const AuxDataset& train, const AuxDataset& val,
                               const GroundTruthBudget& budget, uint64_t seed) {
    Rng root(fnv1a64_u64(arch.content_hash(), fnv1a64_u64(seed)));
    Rng init_rng = root.child("init");
    Rng order_rng = root.child("batches");

    const std::vector<WeightSlot> slots = weight_slots(arch, profile);
    const TargetPlan plan = build_target_plan(arch, profile, train.channels, train.classes);
    const Tensor stem = fixed_stem_weights(profile, train.channels);

    std::vector<Tensor> weights;
    for (const auto& slot : slots) {
        Rng r = init_rng.child(fnv1a64_u64(static_cast<uint64_t>(slot.cell),
                                           fnv1a64_u64(static_cast<uint64_t>(slot.node))));
        weights.push_back(he_normal_conv(slot.shape[0], slot.shape[1], slot.shape[2], r));
    }
    Rng rc = init_rng.child("classifier");
    Tensor cls = glorot_uniform(plan.gap_channels, train.classes, rc);

    const double chance = 1.0 / static_cast<double>(train.classes);
    double best_acc = 0.0;
    std::vector<int> order(static_cast<size_t>(train.count()));
    for (int i = 0; i < train.count(); ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < budget.epochs; ++epoch) {
        for (int i = train.count() - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)],
                      order[static_cast<size_t>(order_rng.uniform_int(i + 1))]);
        for (int start = 0; start + budget.batch <= train.count(); start += budget.batch) {
            const std::vector<int> idx(order.begin() + start, order.begin() + start + budget.batch);
            const AuxBatch batch = train.make_batch(idx);
            Tape t;
            std::vector<NodeId> wn;
            for (const auto& w : weights) wn.push_back(t.leaf(w));
            const NodeId cls_id = t.leaf(cls);
            const NodeId loss = hyper_loss_t(t, plan, slots, wn, t.constant(stem), cls_id, batch);
            if (!std::isfinite(t.value(loss).item())) return GroundTruthResult{chance, true};
            t.backward(loss);
            for (size_t w = 0; w < weights.size(); ++w) {
                const Tensor g = t.grad(wn[w]);
                for (size_t k = 0; k < g.data.size(); ++k)
                    weights[w].data[k] -= budget.lr * g.data[k];
            }
            const Tensor gc = t.grad(cls_id);
            for (size_t k = 0; k < gc.data.size(); ++k) cls.data[k] -= budget.lr * gc.data[k];
        }
        for (const auto& w : weights)
            if (!w.all_finite()) return GroundTruthResult{chance, true};
        if (!cls.all_finite()) return GroundTruthResult{chance, true};
        const TargetNetwork net(plan, slots, weights, stem, cls);
        best_acc = std::max(best_acc, net.accuracy(val, budget.batch));
    }
    return GroundTruthResult{best_acc, false};
}

// ---------------------------------------------------------------------------
// bench construction
// ---------------------------------------------------------------------------

BenchBuildResult build_bench(const SearchSpaceProfile& profile, const AuxDataset& train,
                             const AuxDataset& val, const BenchBuildConfig& cfg) {
    std::vector<ArchitectureSpec> archs;
    bool partial = false;
    if (cfg.exhaustive) {
        const std::vector<CellSpec> cells = enumerate_cells(profile);
        for (const auto& c : cells) archs.push_back(expand_architecture(profile, c));
        if (cfg.count > 0 && cfg.count < static_cast<int>(archs.size()))
            archs.resize(static_cast<size_t>(cfg.count));
        if (cfg.count > static_cast<int>(archs.size())) partial = true;
    } else {
        Rng rng = Rng(cfg.seed).child("arch-sample");
        std::set<uint64_t> seen;
        const int64_t max_attempts = std::max<int64_t>(10000, 1000LL * cfg.count);
        int64_t attempts = 0;
        while (static_cast<int>(archs.size()) < cfg.count && attempts < max_attempts) {
            ++attempts;
            ArchitectureSpec a = sample_random(profile, rng);
            if (seen.insert(a.content_hash()).second) archs.push_back(std::move(a));
        }
        partial = static_cast<int>(archs.size()) < cfg.count;
    }

    std::vector<BenchRecord> records(archs.size());
    const int threads = std::max(1, cfg.threads);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= archs.size()) return;
            const GroundTruthResult gt =
                ground_truth(archs[i], profile, train, val, cfg.budget, cfg.seed);
            BenchRecord rec;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "m%016llx",
                          static_cast<unsigned long long>(archs[i].content_hash()));
            rec.id = buf;
            rec.arch = archs[i];
            rec.val_acc = gt.accuracy;
            records[i] = std::move(rec);
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return BenchBuildResult{std::move(records), partial};
}

void write_bench_with_sidecar(const std::string& path, const BenchBuildResult& result,
                              const SearchSpaceProfile& profile, const BenchBuildConfig& cfg) {
    write_bench(path, result.records);
    std::ofstream meta(path + ".meta", std::ios::trunc);
    if (!meta) throw std::runtime_error("cannot open '" + path + ".meta' for writing");
    meta << "profile=" << profile.name << "\n";
    meta << "records=" << result.records.size() << "\n";
    meta << "partial=" << (result.partial ? 1 : 0) << "\n";
    meta << "exhaustive=" << (cfg.exhaustive ? 1 : 0) << "\n";
    meta << "seed=" << cfg.seed << "\n";
    meta << "budget_epochs=" << cfg.budget.epochs << "\n";
    meta << "budget_lr=" << cfg.budget.lr << "\n";
    meta << "budget_batch=" << cfg.budget.batch << "\n";
}

}  // namespace hypernas
