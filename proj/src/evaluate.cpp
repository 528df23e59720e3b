#include "hypernas/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace hypernas {

PredictorKind parse_predictor_kind(const std::string& s) {
    if (s == "trained") return PredictorKind::Trained;
    if (s == "oracle") return PredictorKind::Oracle;
    if (s == "anti-oracle") return PredictorKind::AntiOracle;
    throw std::invalid_argument("unknown predictor kind '" + s + "' (trained|oracle|anti-oracle)");
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int bench_size, SplitSpec split,
                                                            uint64_t seed) {
    if (split.train_size < 1 || split.train_size >= bench_size)
        throw std::invalid_argument("split: train size " + std::to_string(split.train_size) +
                                    " not in [1, " + std::to_string(bench_size) + ")");
    Rng rng = Rng(seed).child("split");
    std::vector<int> perm(static_cast<size_t>(bench_size));
    for (int i = 0; i < bench_size; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = bench_size - 1; i > 0; --i)
        std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.uniform_int(i + 1))]);

    std::vector<int> train(perm.begin(), perm.begin() + split.train_size);
    std::vector<int> pool(perm.begin() + split.train_size, perm.end());
    std::vector<int> test;
    if (split.test_size < 0 || split.test_size >= static_cast<int>(pool.size())) {
        test = pool;
    } else {
        test.assign(pool.begin(), pool.begin() + split.test_size);
    }
    // Train/test disjointness is a protocol invariant; check it outright.
    std::set<int> train_set(train.begin(), train.end());
    for (int t : test)
        if (train_set.count(t)) throw std::logic_error("split: test index leaked into training");
    return {std::move(train), std::move(test)};
}

std::vector<double> predict_bench(const ModelState& state, const std::vector<BenchRecord>& records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& rec : records) out.push_back(predict_architecture(state, rec.arch));
    return out;
}

RankReport evaluate_split(const SearchSpaceProfile& profile, const std::vector<BenchRecord>& bench,
                          const TrainConfig& base_cfg, SplitSpec split,
                          const std::vector<uint64_t>& seeds, const AuxDataset* aux,
                          PredictorKind kind, std::vector<ModelState>* trained_out) {
    RankReport report;
    report.split = split;
    report.bench_size = static_cast<int>(bench.size());
    double tau_sum = 0.0, rho_sum = 0.0;
    int tau_n = 0, rho_n = 0;
    for (uint64_t seed : seeds) {
        auto [train_idx, test_idx] = split_indices(report.bench_size, split, seed);
        std::vector<BenchRecord> train_records, test_records;
        for (int i : train_idx) train_records.push_back(bench[static_cast<size_t>(i)]);
        for (int i : test_idx) test_records.push_back(bench[static_cast<size_t>(i)]);

        std::vector<double> truth;
        truth.reserve(test_records.size());
        for (const auto& r : test_records) {
            if (!r.val_acc) throw std::invalid_argument("evaluate_split: unlabeled test record");
            truth.push_back(*r.val_acc);
        }

        std::vector<double> pred;
        if (kind == PredictorKind::Oracle) {
            pred = truth;
        } else if (kind == PredictorKind::AntiOracle) {
            pred.reserve(truth.size());
            for (double v : truth) pred.push_back(-v);
        } else {
            if (!aux) throw std::invalid_argument("evaluate_split: trained predictor needs aux data");
            TrainConfig cfg = base_cfg;
            cfg.seed = seed;
            TrainResult tr = train(profile, train_records, *aux, cfg);
            pred = predict_bench(tr.state, test_records);
            if (trained_out) trained_out->push_back(std::move(tr.state));
        }

        SeedResult sr;
        sr.seed = seed;
        sr.tau = kendall_tau(pred, truth);
        sr.rho = spearman(pred, truth);
        if (sr.tau) {
            tau_sum += *sr.tau;
            ++tau_n;
        }
        if (sr.rho) {
            rho_sum += *sr.rho;
            ++rho_n;
        }
        report.per_seed.push_back(sr);
    }
    if (tau_n) report.mean_tau = tau_sum / tau_n;
    if (rho_n) report.mean_rho = rho_sum / rho_n;
    return report;
}

namespace {

std::string opt_str(const std::optional<double>& v) {
    if (!v) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", *v);
    return buf;
}

}  // namespace

void write_rank_reports_csv(const std::string& path,
                            const std::vector<std::pair<std::string, RankReport>>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "label,train_size,test_size,seed,kendall_tau,spearman\n";
    for (const auto& [label, rep] : reports) {
        const int test_size = rep.split.test_size;
        for (const auto& sr : rep.per_seed)
            out << label << "," << rep.split.train_size << ","
                << (test_size < 0 ? std::string("all") : std::to_string(test_size)) << "," << sr.seed
                << "," << opt_str(sr.tau) << "," << opt_str(sr.rho) << "\n";
        out << label << "," << rep.split.train_size << ","
            << (test_size < 0 ? std::string("all") : std::to_string(test_size)) << ",mean,"
            << opt_str(rep.mean_tau) << "," << opt_str(rep.mean_rho) << "\n";
    }
}

void write_rank_reports_jsonl(const std::string& path,
                              const std::vector<std::pair<std::string, RankReport>>& reports) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& [label, rep] : reports) {
        nlohmann::json j;
        j["label"] = label;
        j["train_size"] = rep.split.train_size;
        j["test_size"] = rep.split.test_size;
        j["bench_size"] = rep.bench_size;
        nlohmann::json seeds = nlohmann::json::array();
        for (const auto& sr : rep.per_seed) {
            nlohmann::json sj;
            sj["seed"] = sr.seed;
            if (sr.tau)
                sj["tau"] = *sr.tau;
            else
                sj["tau"] = nullptr;
            if (sr.rho)
                sj["rho"] = *sr.rho;
            else
                sj["rho"] = nullptr;
            seeds.push_back(sj);
        }
        j["per_seed"] = seeds;
        if (rep.mean_tau) j["mean_tau"] = *rep.mean_tau;
        if (rep.mean_rho) j["mean_rho"] = *rep.mean_rho;
        out << j.dump() << "\n";
    }
}

void export_embeddings(const ModelState& state, const std::vector<BenchRecord>& records,
                       const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    const int d = state.cfg.encoder.dim;
    out << "id";
    for (int i = 0; i < d; ++i) out << ",h" << i;
    out << ",accuracy\n";
    char buf[64];
    for (const auto& rec : records) {
        const GlobalEncoding enc = encode_with_positions(rec.arch, state.encoder, state.cfg.mode);
        out << rec.id;
        for (int i = 0; i < d; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", enc.h.at(0, i));
            out << "," << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.17g",
                      rec.val_acc ? *rec.val_acc : std::numeric_limits<double>::quiet_NaN());
        out << "," << buf << "\n";
    }
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace hypernas
