#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypernas/model.hpp"

namespace hypernas {

enum class Paradigm { Dual, PredOnly, HyperOnly };

const char* paradigm_name(Paradigm p);
Paradigm parse_paradigm(const std::string& s);

struct TrainConfig {
    Paradigm paradigm = Paradigm::Dual;
    int epochs = 200;
    int steps_per_epoch = 0;  // 0: one shuffled pass over the M training pairs
    int accumulate_every = 10;
    double lr = 1e-3;
    std::vector<int> lr_halve_epochs{100, 150};
    int batch_size = 128;
    double q = 1.5;
    uint64_t seed = 0;
    ModelConfig model;

    void check() const;
};

// Learning rate during `epoch` (1-based): halved after each milestone epoch.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct StepLosses {
    double pred = std::numeric_limits<double>::quiet_NaN();
    double hyper = std::numeric_limits<double>::quiet_NaN();
};

struct EpochStats {
    int epoch = 0;
    double mean_pred = std::numeric_limits<double>::quiet_NaN();
    double mean_hyper = std::numeric_limits<double>::quiet_NaN();
    double u_pred = 1.0;
    double u_hyper = 1.0;
    double lr = 0.0;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int64_t step, std::string arch_id, double lp, double lh);
    int64_t step;
    std::string arch_id;
    double loss_pred, loss_hyper;
};

// Adam moments plus the gradient accumulation buffer. Gradients add into
// `accum` every step; the buffer is zeroed only when an update is applied.
struct OptimizerState {
    std::map<std::string, Tensor> accum;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    int64_t adam_t = 0;            // number of applied updates
    int64_t total_steps = 0;       // number of train steps taken
    int steps_since_apply = 0;

    static OptimizerState init(const ModelState& state);
};

// One forward/backward of the chosen paradigm on a single pair + aux batch.
struct ForwardOutcome {
    double loss_pred = std::numeric_limits<double>::quiet_NaN();
    double loss_hyper = std::numeric_limits<double>::quiet_NaN();
    double objective = std::numeric_limits<double>::quiet_NaN();  // what is backpropagated
    double kink_distance = std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::string, Tensor>> grads;  // empty unless with_grads
};

ForwardOutcome evaluate_step(const ModelState& state, const ArchitectureSpec& arch,
                             std::optional<double> label, const AuxBatch* batch, Paradigm paradigm,
                             double q, bool with_grads);

// Accumulates gradients; applies an Adam update every cfg.accumulate_every
// steps at learning rate `lr`. Aborts (throws TrainingDiverged) on any
// non-finite loss.
StepLosses train_step(ModelState& state, OptimizerState& opt, const BenchRecord& rec,
                      const AuxBatch* batch, const TrainConfig& cfg, double lr);

struct TrainResult {
    ModelState state;
    OptimizerState opt;
    std::vector<EpochStats> history;
};

TrainResult train(const SearchSpaceProfile& profile, const std::vector<BenchRecord>& bench,
                  const AuxDataset& aux, const TrainConfig& cfg);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

// ---- checkpointing ----
// Versioned binary container: magic "HNCK", format version, config hash,
// named f64 tensor blobs (parameters, fixed weights, optimizer state) and
// the training RNG state. Reload reproduces forward outputs bit-for-bit.

struct Checkpoint {
    ModelState state;
    OptimizerState opt;
    int epoch = 0;
    std::array<uint64_t, 4> rng_state{};
    uint64_t config_hash = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hypernas
