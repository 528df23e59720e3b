#include "hypernas/model.hpp"

#include <stdexcept>

namespace hypernas {

ModelState ModelState::init(const SearchSpaceProfile& profile, const ModelConfig& cfg,
                            uint64_t seed) {
    profile.check();
    ModelState s;
    s.profile = profile;
    s.cfg = cfg;
    Rng root(seed);
    Rng re = root.child("encoder");
    Rng rr = root.child("regressor");
    Rng rh = root.child("hypernet");
    s.encoder = init_encoder_params(profile, cfg.encoder, re);
    s.regressor = init_regressor_params(cfg.encoder.dim, rr);
    s.hypernet = init_hypernet_params(profile, cfg.encoder.dim, cfg.hypernet, rh);
    s.stem_w = fixed_stem_weights(profile, cfg.aux_channels);
    s.cls_w = fixed_classifier_weights(profile, profile.width_at(profile.N), cfg.aux_classes);
    return s;
}

namespace {

template <typename State, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> walk_params(State& s) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    auto add = [&](const std::string& name, TensorPtr t) { out.emplace_back(name, t); };
    auto add_role = [&](const std::string& prefix, auto& role) {
        add(prefix + ".embed", &role.embed);
        for (size_t l = 0; l < role.w_fwd.size(); ++l)
            add(prefix + ".wfwd." + std::to_string(l), &role.w_fwd[l]);
        for (size_t l = 0; l < role.w_bwd.size(); ++l)
            add(prefix + ".wbwd." + std::to_string(l), &role.w_bwd[l]);
    };
    add_role("enc.normal", s.encoder.normal);
    add_role("enc.reduction", s.encoder.reduction);
    add("enc.pos", &s.encoder.positions);
    add("reg.w1", &s.regressor.w1);
    add("reg.b1", &s.regressor.b1);
    add("reg.w2", &s.regressor.w2);
    add("reg.b2", &s.regressor.b2);
    for (size_t l = 0; l < s.hypernet.w.size(); ++l) {
        add("hyper.trunk.w" + std::to_string(l), &s.hypernet.w[l]);
        add("hyper.trunk.b" + std::to_string(l), &s.hypernet.b[l]);
    }
    for (size_t h = 0; h < s.hypernet.head_w.size(); ++h) {
        add("hyper.head." + std::to_string(h) + ".w", &s.hypernet.head_w[h]);
        add("hyper.head." + std::to_string(h) + ".b", &s.hypernet.head_b[h]);
    }
    add("mt.rho_pred", &s.rho_pred);
    add("mt.rho_hyper", &s.rho_hyper);
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelState::named_params() {
    return walk_params<ModelState, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> ModelState::named_params() const {
    return walk_params<const ModelState, const Tensor*>(*this);
}

void ModelState::require_finite() const {
    for (const auto& [name, t] : named_params()) t->require_finite(name);
}

std::string param_group(const std::string& name) {
    if (name.rfind("enc.", 0) == 0) return "encoder";
    if (name.rfind("reg.", 0) == 0) return "regressor";
    if (name.rfind("hyper.", 0) == 0) return "hypernet";
    if (name.rfind("mt.", 0) == 0) return "rho";
    throw std::invalid_argument("unknown parameter name '" + name + "'");
}

BoundModel bind_model(Tape& t, const ModelState& state, bool trainable) {
    BoundModel b;
    b.encoder = bind_encoder(t, state.encoder, trainable);
    b.regressor = bind_regressor(t, state.regressor, trainable);
    b.hypernet = bind_hypernet(t, state.hypernet, trainable);
    b.rho_pred = trainable ? t.leaf(state.rho_pred) : t.constant(state.rho_pred);
    b.rho_hyper = trainable ? t.leaf(state.rho_hyper) : t.constant(state.rho_hyper);
    b.stem_w = t.constant(state.stem_w);
    b.cls_w = t.constant(state.cls_w);

    // Mirror the named_params() walk so entries align by construction.
    auto add_role = [&](const std::string& prefix, const BoundRoleEncoder& role) {
        b.params.emplace_back(prefix + ".embed", role.embed);
        for (size_t l = 0; l < role.w_fwd.size(); ++l)
            b.params.emplace_back(prefix + ".wfwd." + std::to_string(l), role.w_fwd[l]);
        for (size_t l = 0; l < role.w_bwd.size(); ++l)
            b.params.emplace_back(prefix + ".wbwd." + std::to_string(l), role.w_bwd[l]);
    };
    add_role("enc.normal", b.encoder.normal);
    add_role("enc.reduction", b.encoder.reduction);
    b.params.emplace_back("enc.pos", b.encoder.positions);
    b.params.emplace_back("reg.w1", b.regressor.w1);
    b.params.emplace_back("reg.b1", b.regressor.b1);
    b.params.emplace_back("reg.w2", b.regressor.w2);
    b.params.emplace_back("reg.b2", b.regressor.b2);
    for (size_t l = 0; l < b.hypernet.w.size(); ++l) {
        b.params.emplace_back("hyper.trunk.w" + std::to_string(l), b.hypernet.w[l]);
        b.params.emplace_back("hyper.trunk.b" + std::to_string(l), b.hypernet.b[l]);
    }
    for (size_t h = 0; h < b.hypernet.head_w.size(); ++h) {
        b.params.emplace_back("hyper.head." + std::to_string(h) + ".w", b.hypernet.head_w[h]);
        b.params.emplace_back("hyper.head." + std::to_string(h) + ".b", b.hypernet.head_b[h]);
    }
    b.params.emplace_back("mt.rho_pred", b.rho_pred);
    b.params.emplace_back("mt.rho_hyper", b.rho_hyper);
    return b;
}

double predict_architecture(const ModelState& state, const ArchitectureSpec& arch) {
    Tape t;
    BoundModel b = bind_model(t, state, false);
    const EncodingNodes enc = encode_architecture_t(t, arch, b.encoder, state.cfg.mode);
    return t.value(predict_t(t, enc.h, b.regressor)).item();
}

}  // namespace hypernas
