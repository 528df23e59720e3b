#include "hypernas/search.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace hypernas {

void EvoConfig::check() const {
    if (population < 1) throw std::invalid_argument("search: population must be >= 1");
    if (generations < 1) throw std::invalid_argument("search: generations must be >= 1");
    if (elitism < 0 || elitism > population)
        throw std::invalid_argument("search: elitism must be in [0, population]");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0))
        throw std::invalid_argument("search: mutation rate must be in [0,1]");
    if (tournament < 1 || tournament > population)
        throw std::invalid_argument("search: tournament size must be in [1, population]");
    if (topk < 1) throw std::invalid_argument("search: topk must be >= 1");
}

ArchitectureSpec mutate(const ArchitectureSpec& spec, const SearchSpaceProfile& profile,
                        double rate, Rng& rng) {
    // The searched genes live in the normal template cell.
    const CellSpec* parent = nullptr;
    for (size_t i = 0; i < spec.cells.size(); ++i)
        if (spec.roles[i] == CellRole::Normal) {
            parent = &spec.cells[i];
            break;
        }
    if (!parent) throw std::invalid_argument("mutate: architecture has no normal cell");

    // An edge is a mutation site only if toggling it alone keeps the cell valid.
    std::vector<std::pair<int, int>> optional_edges;
    for (int i = 0; i < parent->F; ++i)
        for (int j = i + 1; j < parent->F; ++j) {
            CellSpec probe = *parent;
            probe.set_edge(i, j, !probe.edge(i, j));
            if (validate_cell(probe, profile).empty()) optional_edges.emplace_back(i, j);
        }

    const int n_ops = profile.vocab.op_count();
    for (int attempt = 0; attempt < 100; ++attempt) {
        CellSpec child = *parent;
        for (int v = 1; v < child.F - 1; ++v) {
            if (!rng.bernoulli(rate)) continue;
            const int cur = child.op_indices[static_cast<size_t>(v)];
            if (n_ops < 2) continue;
            int pick = rng.uniform_int(n_ops - 1);
            if (pick >= cur) ++pick;  // uniform over the other ops
            child.op_indices[static_cast<size_t>(v)] = pick;
        }
        for (const auto& [i, j] : optional_edges)
            if (rng.bernoulli(rate)) child.set_edge(i, j, !child.edge(i, j));
        if (validate_cell(child, profile).empty()) return expand_architecture(profile, child);
    }
    return spec;  // all resampled combinations were invalid
}

namespace {

struct Individual {
    ArchitectureSpec arch;
    uint64_t hash = 0;
    double fitness = 0.0;
};

}  // namespace

SearchTrace evolve(const FitnessFn& fitness, const SearchSpaceProfile& profile,
                   const EvoConfig& cfg) {
    cfg.check();
    SearchTrace trace;
    const uint64_t hyper_calls_before = weight_generation_call_count();

    Rng root(cfg.seed);
    Rng init_rng = root.child("init");
    Rng evo_rng = root.child("evolve");

    std::unordered_map<uint64_t, double> cache;
    std::unordered_set<uint64_t> seen;
    // All distinct evaluated architectures, for the final top-k (insertion
    // order breaks fitness ties deterministically).
    std::vector<Individual> archive;
    bool budget_hit = false;

    auto evaluate = [&](Individual& ind) -> bool {
        ind.hash = ind.arch.content_hash();
        if (cfg.cache_fitness) {
            auto it = cache.find(ind.hash);
            if (it != cache.end()) {
                ind.fitness = it->second;
                return true;
            }
        }
        const bool is_new = !seen.count(ind.hash);
        if (is_new && cfg.query_budget && trace.unique_queries >= *cfg.query_budget) {
            budget_hit = true;
            return false;
        }
        trace.raw_queries += 1;
        ind.fitness = fitness(ind.arch);
        if (is_new) {
            seen.insert(ind.hash);
            trace.unique_queries += 1;
            archive.push_back(ind);
        }
        if (cfg.cache_fitness) cache.emplace(ind.hash, ind.fitness);
        return true;
    };

    std::vector<Individual> population;
    population.reserve(static_cast<size_t>(cfg.population));
    for (int i = 0; i < cfg.population && !budget_hit; ++i) {
        Individual ind;
        ind.arch = sample_random(profile, init_rng);
        if (evaluate(ind)) population.push_back(std::move(ind));
    }

    auto by_fitness_desc = [](const Individual& a, const Individual& b) {
        return a.fitness > b.fitness;
    };

    for (int gen = 0; gen < cfg.generations && !budget_hit && !population.empty(); ++gen) {
        std::stable_sort(population.begin(), population.end(), by_fitness_desc);
        GenStats gs;
        gs.best = population.front().fitness;
        double sum = 0.0;
        for (const auto& ind : population) sum += ind.fitness;
        gs.mean = sum / static_cast<double>(population.size());
        trace.generations.push_back(gs);

        if (gen + 1 == cfg.generations) break;

        std::vector<Individual> next(population.begin(),
                                     population.begin() + std::min<size_t>(
                                                              static_cast<size_t>(cfg.elitism),
                                                              population.size()));
        while (static_cast<int>(next.size()) < cfg.population && !budget_hit) {
            int best = evo_rng.uniform_int(static_cast<int>(population.size()));
            for (int k = 1; k < cfg.tournament; ++k) {
                const int challenger = evo_rng.uniform_int(static_cast<int>(population.size()));
                if (population[static_cast<size_t>(challenger)].fitness >
                    population[static_cast<size_t>(best)].fitness)
                    best = challenger;
            }
            Individual child;
            child.arch = mutate(population[static_cast<size_t>(best)].arch, profile,
                                cfg.mutation_rate, evo_rng);
            if (evaluate(child)) next.push_back(std::move(child));
        }
        if (!budget_hit) population = std::move(next);
    }

    trace.budget_truncated = budget_hit;
    std::stable_sort(archive.begin(), archive.end(), by_fitness_desc);
    const size_t k = std::min<size_t>(static_cast<size_t>(cfg.topk), archive.size());
    for (size_t i = 0; i < k; ++i)
        trace.topk.push_back(ScoredArch{archive[i].arch, archive[i].fitness});
    trace.weight_generation_calls = weight_generation_call_count() - hyper_calls_before;
    return trace;
}

FitnessFn predictor_fitness(const ModelState& state) {
    return [&state](const ArchitectureSpec& arch) { return predict_architecture(state, arch); };
}

FitnessFn bench_lookup_fitness(const std::vector<BenchRecord>& bench) {
    auto table = std::make_shared<std::unordered_map<uint64_t, double>>();
    for (const auto& rec : bench) {
        if (!rec.val_acc) throw std::invalid_argument("bench fitness: unlabeled record " + rec.id);
        table->emplace(rec.arch.content_hash(), *rec.val_acc);
    }
    return [table](const ArchitectureSpec& arch) {
        auto it = table->find(arch.content_hash());
        if (it == table->end())
            throw std::out_of_range("bench fitness: architecture not in the table");
        return it->second;
    };
}

void write_trace_jsonl(const std::string& path, const SearchTrace& trace, const EvoConfig& cfg) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    {
        nlohmann::json j;
        j["event"] = "config";
        j["population"] = cfg.population;
        j["generations"] = cfg.generations;
        j["mutation_rate"] = cfg.mutation_rate;
        j["tournament"] = cfg.tournament;
        j["elitism"] = cfg.elitism;
        j["seed"] = cfg.seed;
        j["cache_fitness"] = cfg.cache_fitness;
        if (cfg.query_budget) j["query_budget"] = *cfg.query_budget;
        out << j.dump() << "\n";
    }
    for (size_t g = 0; g < trace.generations.size(); ++g) {
        nlohmann::json j;
        j["event"] = "generation";
        j["gen"] = g;
        j["best"] = trace.generations[g].best;
        j["mean"] = trace.generations[g].mean;
        out << j.dump() << "\n";
    }
    nlohmann::json j;
    j["event"] = "summary";
    j["raw_queries"] = trace.raw_queries;
    j["unique_queries"] = trace.unique_queries;
    j["budget_truncated"] = trace.budget_truncated;
    j["weight_generation_calls"] = trace.weight_generation_calls;
    out << j.dump() << "\n";
}

void write_topk_bench(const std::string& path, const SearchTrace& trace) {
    std::vector<BenchRecord> records;
    for (size_t i = 0; i < trace.topk.size(); ++i) {
        BenchRecord rec;
        rec.id = "top" + std::to_string(i + 1);
        rec.arch = trace.topk[i].arch;
        records.push_back(std::move(rec));
    }
    write_bench(path, records);
}

}  // namespace hypernas
