#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hypernas/archspace.hpp"
#include "hypernas/encoder.hpp"
#include "hypernas/hypernet.hpp"
#include "hypernas/multitask.hpp"
#include "hypernas/predictor.hpp"

namespace hypernas {

struct ModelConfig {
    EncoderDims encoder{6, 72};
    HypernetDims hypernet{96, 3};
    InjectionMode mode = InjectionMode::CellFeature;
    int aux_channels = 1;
    int aux_classes = 4;
};

// Every learnable parameter of the dual-task model, plus the fixed stem and
// classifier weights of the target networks (deterministic, never trained).
struct ModelState {
    SearchSpaceProfile profile;
    ModelConfig cfg;
    EncoderParams encoder;
    RegressorParams regressor;
    HypernetParams hypernet;
    Tensor rho_pred{{1}, {0.0}};   // u_pred = exp(rho) starts at 1
    Tensor rho_hyper{{1}, {0.0}};
    Tensor stem_w;
    Tensor cls_w;

    static ModelState init(const SearchSpaceProfile& profile, const ModelConfig& cfg,
                           uint64_t seed);

    // Stable name -> tensor registry; the canonical ordering for optimizers,
    // gradient checks and checkpoints.
    std::vector<std::pair<std::string, Tensor*>> named_params();
    std::vector<std::pair<std::string, const Tensor*>> named_params() const;

    void require_finite() const;
};

// Param group of a tensor name: "encoder", "regressor", "hypernet" or "rho".
std::string param_group(const std::string& name);

struct BoundModel {
    BoundEncoder encoder;
    BoundRegressor regressor;
    BoundHypernet hypernet;
    NodeId rho_pred = -1;
    NodeId rho_hyper = -1;
    NodeId stem_w = -1;  // constant
    NodeId cls_w = -1;   // constant
    // Aligned with ModelState::named_params().
    std::vector<std::pair<std::string, NodeId>> params;
};

BoundModel bind_model(Tape& t, const ModelState& state, bool trainable);

// Encoder + regressor forward only (the hypernetwork branch stays closed).
double predict_architecture(const ModelState& state, const ArchitectureSpec& arch);

}  // namespace hypernas
