#pragma once

#include <string>
#include <vector>

#include "hypernas/archspace.hpp"
#include "hypernas/hypernet.hpp"

namespace hypernas {

// Synthetic image dataset: class-separable oriented-bar and checkerboard
// patterns plus Gaussian pixel noise. Stands in for the auxiliary dataset
// and for the labels produced by fully training tiny target networks.
struct SynthDatasetSpec {
    int channels = 1;
    int height = 8;
    int width = 8;
    int classes = 4;
    int train_count = 2048;
    int val_count = 512;
    double sigma = 0.5;
    uint64_t seed = 0;
};

struct SynthDataset {
    AuxDataset train;
    AuxDataset val;
};

// Noise-free pattern variants (phase shifts) of one class; the generator
// draws a variant uniformly and adds noise. At sigma=0 every sample equals
// one of these templates exactly.
std::vector<std::vector<float>> class_templates(const SynthDatasetSpec& spec, int cls);

SynthDataset generate_dataset(const SynthDatasetSpec& spec);

// Writes <dir>/aux_train.auxd and <dir>/aux_val.auxd; returns the two paths.
std::pair<std::string, std::string> write_dataset(const std::string& dir, const SynthDataset& ds);

struct GroundTruthBudget {
    int epochs = 10;
    double lr = 1e-2;
    int batch = 64;
};

struct GroundTruthResult {
    double accuracy = 0.0;  // best validation accuracy across epochs
    bool diverged = false;  // non-finite loss; accuracy pinned to chance level
};

// Trains the architecture's target network from random initialization with
// SGD (node weights and classifier; the stem stays fixed) and reports the
// best validation accuracy. Deterministic in (arch, dataset, seed).
GroundTruthResult ground_truth(const ArchitectureSpec& arch, const SearchSpaceProfile& profile,
                               const AuxDataset& train, const AuxDataset& val,
                               const GroundTruthBudget& budget, uint64_t seed);

struct BenchBuildConfig {
    int count = 200;           // ignored (full space) when exhaustive and count == 0
    bool exhaustive = false;   // label the whole enumerable space instead of sampling
    uint64_t seed = 0;
    GroundTruthBudget budget;
    int threads = 1;
};

struct BenchBuildResult {
    std::vector<BenchRecord> records;
    bool partial = false;  // could not find `count` distinct architectures
};

BenchBuildResult build_bench(const SearchSpaceProfile& profile, const AuxDataset& train,
                             const AuxDataset& val, const BenchBuildConfig& cfg);

// Bench file plus a plain-text key=value provenance sidecar at <path>.meta.
void write_bench_with_sidecar(const std::string& path, const BenchBuildResult& result,
                              const SearchSpaceProfile& profile, const BenchBuildConfig& cfg);

}  // namespace hypernas
