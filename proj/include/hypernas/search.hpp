#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hypernas/model.hpp"

namespace hypernas {

struct EvoConfig {
    int population = 64;
    int generations = 30;
    double mutation_rate = 0.1;
    int tournament = 4;
    int elitism = 4;
    std::optional<uint64_t> query_budget;  // cap on unique fitness queries
    uint64_t seed = 0;
    bool cache_fitness = true;
    int topk = 5;

    void check() const;
};

struct GenStats {
    double best = 0.0;
    double mean = 0.0;
};

struct ScoredArch {
    ArchitectureSpec arch;
    double fitness = 0.0;
};

struct SearchTrace {
    std::vector<GenStats> generations;
    uint64_t raw_queries = 0;     // every fitness evaluation issued
    uint64_t unique_queries = 0;  // distinct architectures evaluated
    bool budget_truncated = false;
    uint64_t weight_generation_calls = 0;  // must stay 0: search never runs the hypernetwork
    std::vector<ScoredArch> topk;          // best fitness first
};

using FitnessFn = std::function<double(const ArchitectureSpec&)>;

// Flips op genes and toggles individually-optional edges of the searched
// (normal template) cell, each with probability `rate`; invalid combinations
// are resampled up to 100 times, then the parent is returned unchanged.
ArchitectureSpec mutate(const ArchitectureSpec& spec, const SearchSpaceProfile& profile,
                        double rate, Rng& rng);

// Tournament selection + mutation + elitism over the profile's space, driven
// purely by `fitness`. Deterministic per seed.
SearchTrace evolve(const FitnessFn& fitness, const SearchSpaceProfile& profile,
                   const EvoConfig& cfg);

// Fitness = predict(encode(arch)); the hypernetwork branch is never touched.
FitnessFn predictor_fitness(const ModelState& state);

// Fitness = recorded accuracy, keyed by architecture content hash. Throws on
// architectures missing from the table.
FitnessFn bench_lookup_fitness(const std::vector<BenchRecord>& bench);

void write_trace_jsonl(const std::string& path, const SearchTrace& trace, const EvoConfig& cfg);

// Top-k architectures in the bench line format, without accuracies.
void write_topk_bench(const std::string& path, const SearchTrace& trace);

}  // namespace hypernas
