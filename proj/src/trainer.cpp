#include "hypernas/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hypernas {

using nlohmann::json;

const char* paradigm_name(Paradigm p) {
    switch (p) {
        case Paradigm::Dual: return "dual";
        case Paradigm::PredOnly: return "pred-only";
        case Paradigm::HyperOnly: return "hyper-only";
    }
    return "dual";
}

Paradigm parse_paradigm(const std::string& s) {
    if (s == "dual") return Paradigm::Dual;
    if (s == "pred-only") return Paradigm::PredOnly;
    if (s == "hyper-only") return Paradigm::HyperOnly;
    throw std::invalid_argument("unknown paradigm '" + s + "' (dual|pred-only|hyper-only)");
}

void TrainConfig::check() const {
    if (accumulate_every < 1) throw std::invalid_argument("config: accumulate-every must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch-size must be >= 1");
    if (q <= 0.0) throw std::invalid_argument("config: q must be positive");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
    double lr = cfg.lr;
    for (int milestone : cfg.lr_halve_epochs)
        if (epoch > milestone) lr *= 0.5;
    return lr;
}

TrainingDiverged::TrainingDiverged(int64_t step_, std::string arch_id_, double lp, double lh)
    : std::runtime_error("non-finite loss at step " + std::to_string(step_) + " (arch " + arch_id_ +
                         "): L_pred=" + std::to_string(lp) + " L_hyper=" + std::to_string(lh)),
      step(step_),
      arch_id(std::move(arch_id_)),
      loss_pred(lp),
      loss_hyper(lh) {}

OptimizerState OptimizerState::init(const ModelState& state) {
    OptimizerState opt;
    for (const auto& [name, t] : state.named_params()) {
        opt.accum.emplace(name, Tensor::zeros(t->shape));
        opt.m.emplace(name, Tensor::zeros(t->shape));
        opt.v.emplace(name, Tensor::zeros(t->shape));
    }
    return opt;
}

ForwardOutcome evaluate_step(const ModelState& state, const ArchitectureSpec& arch,
                             std::optional<double> label, const AuxBatch* batch, Paradigm paradigm,
                             double q, bool with_grads) {
    Tape tape;
    BoundModel b = bind_model(tape, state, with_grads);
    const EncodingNodes enc = encode_architecture_t(tape, arch, b.encoder, state.cfg.mode);

    NodeId loss_pred = -1, loss_hyper = -1;
    if (paradigm != Paradigm::HyperOnly) {
        if (!label) throw std::invalid_argument("train step: record has no accuracy label");
        const NodeId yhat = predict_t(tape, enc.h, b.regressor);
        loss_pred = pred_loss_t(tape, yhat, *label);
    }
    if (paradigm != Paradigm::PredOnly) {
        if (!batch) throw std::invalid_argument("train step: hypernetwork branch needs an aux batch");
        const std::vector<NodeId> weights =
            generate_weights_t(tape, arch, state.profile, enc.cells, b.hypernet);
        const TargetPlan plan = build_target_plan(arch, state.profile,
                                                  static_cast<int>(batch->inputs.dim(1)),
                                                  state.cfg.aux_classes);
        loss_hyper = hyper_loss_t(tape, plan, weight_slots(arch, state.profile), weights, b.stem_w,
                                  b.cls_w, *batch);
    }

    NodeId objective = -1;
    switch (paradigm) {
        case Paradigm::Dual:
            objective = total_loss_t(tape, loss_pred, loss_hyper, b.rho_pred, b.rho_hyper, q);
            break;
        case Paradigm::PredOnly:
            objective = loss_pred;
            break;
        case Paradigm::HyperOnly:
            objective = loss_hyper;
            break;
    }

    ForwardOutcome out;
    if (loss_pred >= 0) out.loss_pred = tape.value(loss_pred).item();
    if (loss_hyper >= 0) out.loss_hyper = tape.value(loss_hyper).item();
    out.objective = tape.value(objective).item();
    out.kink_distance = tape.min_kink_distance();
    if (with_grads) {
        tape.backward(objective);
        out.grads.reserve(b.params.size());
        for (const auto& [name, id] : b.params) out.grads.emplace_back(name, tape.grad(id));
    }
    return out;
}

namespace {

void adam_apply(ModelState& state, OptimizerState& opt, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    opt.adam_t += 1;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(opt.adam_t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(opt.adam_t));
    for (auto& [name, t] : state.named_params()) {
        Tensor& g = opt.accum.at(name);
        Tensor& m = opt.m.at(name);
        Tensor& v = opt.v.at(name);
        for (size_t i = 0; i < t->data.size(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / c1;
            const double vhat = v.data[i] / c2;
            t->data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        std::fill(g.data.begin(), g.data.end(), 0.0);
    }
}

}  // namespace

StepLosses train_step(ModelState& state, OptimizerState& opt, const BenchRecord& rec,
                      const AuxBatch* batch, const TrainConfig& cfg, double lr) {
    const ForwardOutcome fo = evaluate_step(state, rec.arch, rec.val_acc, batch, cfg.paradigm,
                                            cfg.q, true);
    opt.total_steps += 1;
    const bool pred_bad = cfg.paradigm != Paradigm::HyperOnly && !std::isfinite(fo.loss_pred);
    const bool hyper_bad = cfg.paradigm != Paradigm::PredOnly && !std::isfinite(fo.loss_hyper);
    if (pred_bad || hyper_bad || !std::isfinite(fo.objective))
        throw TrainingDiverged(opt.total_steps, rec.id, fo.loss_pred, fo.loss_hyper);
    for (const auto& [name, g] : fo.grads) {
        Tensor& acc = opt.accum.at(name);
        for (size_t i = 0; i < g.data.size(); ++i) acc.data[i] += g.data[i];
    }
    opt.steps_since_apply += 1;
    if (opt.steps_since_apply == cfg.accumulate_every) {
        adam_apply(state, opt, lr);
        opt.steps_since_apply = 0;
    }
    return StepLosses{fo.loss_pred, fo.loss_hyper};
}

TrainResult train(const SearchSpaceProfile& profile, const std::vector<BenchRecord>& bench,
                  const AuxDataset& aux, const TrainConfig& cfg) {
    cfg.check();
    if (bench.empty()) throw std::invalid_argument("train: empty bench");
    const int M = static_cast<int>(bench.size());

    TrainResult res;
    res.state = ModelState::init(profile, cfg.model, cfg.seed);
    res.opt = OptimizerState::init(res.state);
    Rng root(cfg.seed);
    Rng order_rng = root.child("pair-order");
    Rng aux_rng = root.child("aux-batches");

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg, epoch);
        std::vector<int> order;
        if (cfg.steps_per_epoch <= 0) {
            order.resize(static_cast<size_t>(M));
            for (int i = 0; i < M; ++i) order[static_cast<size_t>(i)] = i;
            for (int i = M - 1; i > 0; --i)
                std::swap(order[static_cast<size_t>(i)],
                          order[static_cast<size_t>(order_rng.uniform_int(i + 1))]);
        } else {
            order.resize(static_cast<size_t>(cfg.steps_per_epoch));
            for (int& i : order) i = order_rng.uniform_int(M);
        }

        double sum_pred = 0.0, sum_hyper = 0.0;
        int n_pred = 0, n_hyper = 0;
        for (int idx : order) {
            AuxBatch batch;
            const AuxBatch* batch_ptr = nullptr;
            if (cfg.paradigm != Paradigm::PredOnly) {
                batch = aux.sample_batch(cfg.batch_size, aux_rng);
                batch_ptr = &batch;
            }
            const StepLosses losses =
                train_step(res.state, res.opt, bench[static_cast<size_t>(idx)], batch_ptr, cfg, lr);
            if (std::isfinite(losses.pred)) {
                sum_pred += losses.pred;
                ++n_pred;
            }
            if (std::isfinite(losses.hyper)) {
                sum_hyper += losses.hyper;
                ++n_hyper;
            }
        }
        EpochStats es;
        es.epoch = epoch;
        es.lr = lr;
        if (n_pred) es.mean_pred = sum_pred / n_pred;
        if (n_hyper) es.mean_hyper = sum_hyper / n_hyper;
        es.u_pred = std::exp(res.state.rho_pred.item());
        es.u_hyper = std::exp(res.state.rho_hyper.item());
        res.history.push_back(es);
    }
    return res;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "epoch,L_pred,L_hyper,u_pred,u_hyper,lr\n";
    char buf[256];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.mean_pred,
                      e.mean_hyper, e.u_pred, e.u_hyper, e.lr);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// checkpointing
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void write_u32(std::ofstream& o, uint32_t v) { o.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ofstream& o, uint64_t v) { o.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::ifstream& i) {
    uint32_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::ifstream& i) {
    uint64_t v = 0;
    i.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_string(std::ofstream& o, const std::string& s) {
    write_u64(o, s.size());
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& i) {
    const uint64_t n = read_u64(i);
    std::string s(n, '\0');
    i.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void write_tensor(std::ofstream& o, const std::string& name, const Tensor& t) {
    write_string(o, name);
    write_u32(o, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape) write_u64(o, static_cast<uint64_t>(d));
    o.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor(std::ifstream& i) {
    const std::string name = read_string(i);
    const uint32_t rank = read_u32(i);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(read_u64(i));
    Tensor t(shape);
    i.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    return {name, std::move(t)};
}

json profile_to_json(const SearchSpaceProfile& p);
SearchSpaceProfile profile_from_json(const json& j);

json profile_to_json(const SearchSpaceProfile& p) {
    // Reuses the profile file layout via a temp string round trip would touch
    // the filesystem; serialize directly instead.
    json j;
    j["name"] = p.name;
    j["F"] = p.F;
    j["N"] = p.N;
    j["reduction_positions"] = p.reduction_positions;
    j["stem_channels"] = p.stem_channels;
    j["template_shared"] = p.template_shared;
    json ops = json::array();
    for (const auto& op : p.vocab.ops) {
        json oj;
        oj["name"] = op.name;
        oj["kind"] = op.kind == OpKind::Parametric ? "parametric" : "parameter_free";
        oj["semantic"] = static_cast<int>(op.semantic);
        oj["kernel"] = op.kernel;
        oj["head"] = op.head;
        ops.push_back(oj);
    }
    j["ops"] = ops;
    if (!p.reduction_positions.empty()) {
        json rc;
        rc["F"] = p.fixed_reduction_cell.F;
        rc["adj"] = p.fixed_reduction_cell.adj;
        rc["ops"] = p.fixed_reduction_cell.op_indices;
        j["fixed_reduction_cell"] = rc;
    }
    return j;
}

SearchSpaceProfile profile_from_json(const json& j) {
    SearchSpaceProfile p;
    p.name = j.at("name").get<std::string>();
    p.F = j.at("F").get<int>();
    p.N = j.at("N").get<int>();
    p.reduction_positions = j.at("reduction_positions").get<std::vector<int>>();
    p.stem_channels = j.at("stem_channels").get<int>();
    p.template_shared = j.at("template_shared").get<bool>();
    for (const auto& oj : j.at("ops")) {
        OpDef op;
        op.name = oj.at("name").get<std::string>();
        op.kind = oj.at("kind").get<std::string>() == "parametric" ? OpKind::Parametric
                                                                   : OpKind::ParameterFree;
        op.semantic = static_cast<OpSemantic>(oj.at("semantic").get<int>());
        op.kernel = oj.at("kernel").get<int>();
        op.head = oj.at("head").get<int>();
        p.vocab.ops.push_back(op);
    }
    if (j.contains("fixed_reduction_cell")) {
        const auto& rc = j["fixed_reduction_cell"];
        p.fixed_reduction_cell.F = rc.at("F").get<int>();
        p.fixed_reduction_cell.adj = rc.at("adj").get<std::vector<uint8_t>>();
        p.fixed_reduction_cell.op_indices = rc.at("ops").get<std::vector<int>>();
    }
    p.check();
    return p;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    ck.state.require_finite();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
    out.write("HNCK", 4);
    write_u32(out, kCheckpointVersion);
    write_u64(out, ck.config_hash);
    write_u32(out, static_cast<uint32_t>(ck.epoch));
    write_u64(out, static_cast<uint64_t>(ck.opt.adam_t));
    write_u64(out, static_cast<uint64_t>(ck.opt.total_steps));
    write_u32(out, static_cast<uint32_t>(ck.opt.steps_since_apply));
    for (uint64_t w : ck.rng_state) write_u64(out, w);

    json meta;
    meta["profile"] = profile_to_json(ck.state.profile);
    meta["enc_layers"] = ck.state.cfg.encoder.layers;
    meta["enc_dim"] = ck.state.cfg.encoder.dim;
    meta["hyper_hidden"] = ck.state.cfg.hypernet.hidden;
    meta["hyper_layers"] = ck.state.cfg.hypernet.layers;
    meta["mode"] = ck.state.cfg.mode == InjectionMode::CellFeature ? "cell-feature" : "position";
    meta["aux_channels"] = ck.state.cfg.aux_channels;
    meta["aux_classes"] = ck.state.cfg.aux_classes;
    write_string(out, meta.dump());

    const auto params = ck.state.named_params();
    const uint32_t tensor_count = static_cast<uint32_t>(params.size() * 4 + 2);
    write_u32(out, tensor_count);
    for (const auto& [name, t] : params) write_tensor(out, name, *t);
    for (const auto& [name, t] : params) write_tensor(out, "opt.m." + name, ck.opt.m.at(name));
    for (const auto& [name, t] : params) write_tensor(out, "opt.v." + name, ck.opt.v.at(name));
    for (const auto& [name, t] : params) write_tensor(out, "opt.accum." + name, ck.opt.accum.at(name));
    write_tensor(out, "fixed.stem", ck.state.stem_w);
    write_tensor(out, "fixed.cls", ck.state.cls_w);
    if (!out) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HNCK", 4) != 0)
        throw std::runtime_error("'" + path + "' is not a checkpoint file");
    const uint32_t version = read_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version " + std::to_string(version) + " unsupported");
    Checkpoint ck;
    ck.config_hash = read_u64(in);
    ck.epoch = static_cast<int>(read_u32(in));
    ck.opt.adam_t = static_cast<int64_t>(read_u64(in));
    ck.opt.total_steps = static_cast<int64_t>(read_u64(in));
    ck.opt.steps_since_apply = static_cast<int>(read_u32(in));
    for (auto& w : ck.rng_state) w = read_u64(in);

    json meta = json::parse(read_string(in));
    ModelConfig cfg;
    cfg.encoder.layers = meta.at("enc_layers").get<int>();
    cfg.encoder.dim = meta.at("enc_dim").get<int>();
    cfg.hypernet.hidden = meta.at("hyper_hidden").get<int>();
    cfg.hypernet.layers = meta.at("hyper_layers").get<int>();
    cfg.mode = meta.at("mode").get<std::string>() == "position" ? InjectionMode::PositionEmbedding
                                                                : InjectionMode::CellFeature;
    cfg.aux_channels = meta.at("aux_channels").get<int>();
    cfg.aux_classes = meta.at("aux_classes").get<int>();
    const SearchSpaceProfile profile = profile_from_json(meta.at("profile"));
    ck.state = ModelState::init(profile, cfg, 0);
    ck.opt.accum.clear();
    ck.opt.m.clear();
    ck.opt.v.clear();

    const uint32_t tensor_count = read_u32(in);
    auto params = ck.state.named_params();
    auto find_param = [&](const std::string& name) -> Tensor* {
        for (auto& [n, t] : params)
            if (n == name) return t;
        return nullptr;
    };
    for (uint32_t i = 0; i < tensor_count; ++i) {
        auto [name, t] = read_tensor(in);
        if (!in) throw std::runtime_error("truncated checkpoint '" + path + "'");
        if (name == "fixed.stem") {
            ck.state.stem_w = std::move(t);
        } else if (name == "fixed.cls") {
            ck.state.cls_w = std::move(t);
        } else if (name.rfind("opt.m.", 0) == 0) {
            ck.opt.m.emplace(name.substr(6), std::move(t));
        } else if (name.rfind("opt.v.", 0) == 0) {
            ck.opt.v.emplace(name.substr(6), std::move(t));
        } else if (name.rfind("opt.accum.", 0) == 0) {
            ck.opt.accum.emplace(name.substr(10), std::move(t));
        } else {
            Tensor* dst = find_param(name);
            if (!dst) throw std::runtime_error("checkpoint tensor '" + name + "' unknown");
            if (dst->shape != t.shape)
                throw std::runtime_error("checkpoint tensor '" + name + "' shape mismatch");
            *dst = std::move(t);
        }
    }
    for (const auto& [name, t] : params) {
        if (!ck.opt.m.count(name) || !ck.opt.v.count(name) || !ck.opt.accum.count(name))
            throw std::runtime_error("checkpoint missing optimizer state for '" + name + "'");
    }
    return ck;
}

}  // namespace hypernas
