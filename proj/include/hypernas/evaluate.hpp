#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hypernas/metrics.hpp"
#include "hypernas/trainer.hpp"

namespace hypernas {

// Which predictor produces the test-set scores: a freshly trained model, the
// ground-truth labels themselves, or their negation (both used as test
// fixtures for the protocol).
enum class PredictorKind { Trained, Oracle, AntiOracle };

PredictorKind parse_predictor_kind(const std::string& s);

struct SplitSpec {
    int train_size = 20;
    int test_size = -1;  // -1: everything outside the training split
};

struct SeedResult {
    uint64_t seed = 0;
    std::optional<double> tau;
    std::optional<double> rho;
};

struct RankReport {
    SplitSpec split;
    int bench_size = 0;
    std::vector<SeedResult> per_seed;
    std::optional<double> mean_tau;
    std::optional<double> mean_rho;
};

// Per seed: draws a training split and a disjoint test split, trains a model
// with `base_cfg` (seed overridden), and reports rank correlations between
// predictions and ground-truth labels on the test split.
RankReport evaluate_split(const SearchSpaceProfile& profile, const std::vector<BenchRecord>& bench,
                          const TrainConfig& base_cfg, SplitSpec split,
                          const std::vector<uint64_t>& seeds, const AuxDataset* aux,
                          PredictorKind kind, std::vector<ModelState>* trained_out = nullptr);

// Train/test index sets for one seed; test is disjoint from train by
// construction and the function asserts it.
std::pair<std::vector<int>, std::vector<int>> split_indices(int bench_size, SplitSpec split,
                                                            uint64_t seed);

std::vector<double> predict_bench(const ModelState& state, const std::vector<BenchRecord>& records);

// CSV with one row per (label, seed) plus a mean row per label.
void write_rank_reports_csv(const std::string& path,
                            const std::vector<std::pair<std::string, RankReport>>& reports);
void write_rank_reports_jsonl(const std::string& path,
                              const std::vector<std::pair<std::string, RankReport>>& reports);

// Per-architecture rows {id, h_0..h_{d-1}, accuracy} for external projection
// tools; accuracy prints as nan when the record has no label.
void export_embeddings(const ModelState& state, const std::vector<BenchRecord>& records,
                       const std::string& path);

}  // namespace hypernas
