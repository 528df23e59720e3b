#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "hypernas/archspace.hpp"
#include "oracles.hpp"

using namespace hypernas;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Two-op, F=3 profile used by the small enumeration examples.
SearchSpaceProfile tiny_profile() {
    SearchSpaceProfile p;
    p.name = "tiny";
    p.vocab.ops = {
        {"conv3x3", OpKind::Parametric, OpSemantic::Conv, 3, 0},
        {"skip", OpKind::ParameterFree, OpSemantic::Skip, 0, -1},
    };
    p.F = 3;
    p.N = 1;
    p.template_shared = true;
    p.check();
    return p;
}

}  // namespace

TEST_SUITE("archspace") {

TEST_CASE("validate accepts sampled micro architectures") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    Rng rng(1);
    const ArchitectureSpec arch = sample_random(profile, rng);
    CHECK(validate(arch, profile).empty());
}

TEST_CASE("validate reports lower-triangular edges") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    Rng rng(2);
    ArchitectureSpec arch = sample_random(profile, rng);
    arch.cells[0].set_edge(2, 1, true);
    arch.cells[1] = arch.cells[0];  // keep the template constraint satisfied
    arch.cells[3] = arch.cells[0];
    arch.cells[4] = arch.cells[0];
    const auto violations = validate(arch, profile);
    bool found = false;
    for (const auto& v : violations) found = found || v.code == "not-upper-triangular";
    CHECK(found);
}

TEST_CASE("validate agrees with BFS reachability on random cells") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    Rng rng(3);
    int dangling_seen = 0;
    for (int trial = 0; trial < 500; ++trial) {
        CellSpec c = CellSpec::empty(profile.F);
        for (int i = 0; i < profile.F; ++i)
            for (int j = i + 1; j < profile.F; ++j) c.set_edge(i, j, rng.bernoulli(0.5));
        c.op_indices[0] = profile.vocab.input_index();
        c.op_indices[static_cast<size_t>(profile.F - 1)] = profile.vocab.output_index();
        for (int i = 1; i < profile.F - 1; ++i)
            c.op_indices[static_cast<size_t>(i)] = rng.uniform_int(profile.vocab.op_count());

        const auto on_path = oracles::on_io_path_bfs(c);
        std::set<int> dangling_oracle;
        for (int i = 0; i < profile.F; ++i)
            if (!on_path[static_cast<size_t>(i)]) dangling_oracle.insert(i);

        std::set<int> dangling_impl;
        for (const auto& v : validate_cell(c, profile))
            if (v.code == "dangling-node")
                dangling_impl.insert(std::stoi(v.message.substr(5)));
        CHECK(dangling_impl == dangling_oracle);
        if (!dangling_oracle.empty()) ++dangling_seen;
    }
    CHECK(dangling_seen > 0);  // the random sweep actually exercised the case
}

TEST_CASE("sample_random is deterministic per seed and always valid") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    Rng a(42), b(42);
    CHECK(sample_random(profile, a) == sample_random(profile, b));

    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const ArchitectureSpec arch = sample_random(profile, rng);
        CHECK(validate(arch, profile).empty());
    }
}

TEST_CASE("sampling covers the whole enumerable micro cell space") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const auto all_cells = enumerate_cells(profile);
    std::set<uint64_t> enumerated;
    for (const auto& c : all_cells) enumerated.insert(c.content_hash());
    CHECK(enumerated.size() == all_cells.size());  // duplicate-free

    Rng rng(9);
    std::set<uint64_t> sampled;
    for (int i = 0; i < 10000; ++i) sampled.insert(sample_cell(profile, rng).content_hash());
    CHECK(sampled == enumerated);
}

TEST_CASE("enumerate_cells small spaces") {
    // F=2: only the input->output edge, no interior ops.
    SearchSpaceProfile p2 = tiny_profile();
    p2.F = 2;
    CHECK(enumerate_cells(p2).size() == 1);

    // F=3, two op choices, edges {0->1,1->2} forced, 0->2 optional.
    const SearchSpaceProfile p3 = tiny_profile();
    CHECK(enumerate_cells(p3).size() == 4);
}

TEST_CASE("enumerate_cells micro golden count") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    // 10 valid edge subsets x 5^2 interior op assignments.
    CHECK(enumerate_cells(profile).size() == 250);
}

TEST_CASE("enumerate_cells refuses oversized spaces") {
    SearchSpaceProfile p = builtin_profile("nb101-like");  // F=7
    CHECK_THROWS_WITH_AS(enumerate_cells(p), doctest::Contains("F <= 5"), std::invalid_argument);
}

TEST_CASE("bench round trip") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const std::string path = temp_path("bench_roundtrip.jsonl");

    write_bench(path, {});
    CHECK(read_bench(path).empty());

    Rng rng(11);
    BenchRecord rec;
    rec.id = "one";
    rec.arch = sample_random(profile, rng);
    rec.val_acc = 0.625;
    rec.test_acc = 0.5;
    write_bench(path, {rec});
    const auto got = read_bench(path);
    REQUIRE(got.size() == 1);
    CHECK(got[0].id == rec.id);
    CHECK(got[0].arch == rec.arch);
    CHECK(got[0].val_acc == rec.val_acc);
    CHECK(got[0].test_acc == rec.test_acc);
}

TEST_CASE("bench rewrite is byte-identical for 500 records") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    Rng rng(13);
    std::vector<BenchRecord> records;
    for (int i = 0; i < 500; ++i) {
        BenchRecord rec;
        rec.id = "r" + std::to_string(i);
        rec.arch = sample_random(profile, rng);
        rec.val_acc = rng.uniform();
        if (rng.bernoulli(0.5)) rec.test_acc = rng.uniform();
        records.push_back(std::move(rec));
    }
    const std::string p1 = temp_path("bench_a.jsonl");
    const std::string p2 = temp_path("bench_b.jsonl");
    write_bench(p1, records);
    write_bench(p2, read_bench(p1));
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("bench parse errors carry line numbers") {
    const std::string path = temp_path("bench_bad.jsonl");
    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"id":"a","cells":[],"roles":[],"val_acc":0.5})" << "\n";
        out << "{not json\n";
    }
    CHECK_THROWS_WITH_AS(read_bench(path), doctest::Contains("line 2"), std::runtime_error);

    {
        std::ofstream out(path, std::ios::trunc);
        out << R"({"id":"a","cells":[],"roles":[],"val_acc":1.5})" << "\n";
    }
    CHECK_THROWS_WITH_AS(read_bench(path), doctest::Contains("outside [0,1]"), std::runtime_error);
}

TEST_CASE("profile file round trip") {
    const SearchSpaceProfile profile = builtin_profile("micro");
    const std::string path = temp_path("profile_micro.json");
    write_profile(path, profile);
    const SearchSpaceProfile got = read_profile(path);
    CHECK(got.name == profile.name);
    CHECK(got.F == profile.F);
    CHECK(got.N == profile.N);
    CHECK(got.reduction_positions == profile.reduction_positions);
    CHECK(got.fixed_reduction_cell == profile.fixed_reduction_cell);
    REQUIRE(got.vocab.ops.size() == profile.vocab.ops.size());
    for (size_t i = 0; i < got.vocab.ops.size(); ++i) {
        CHECK(got.vocab.ops[i].name == profile.vocab.ops[i].name);
        CHECK(got.vocab.ops[i].kind == profile.vocab.ops[i].kind);
        CHECK(got.vocab.ops[i].semantic == profile.vocab.ops[i].semantic);
        CHECK(got.vocab.ops[i].head == profile.vocab.ops[i].head);
    }
}

TEST_CASE("profile widths derive from reduction positions") {
    const SearchSpaceProfile micro = builtin_profile("micro");
    CHECK(micro.width_at(1) == 8);
    CHECK(micro.width_at(2) == 8);
    CHECK(micro.width_at(3) == 16);  // the reduction cell's own ops run doubled
    CHECK(micro.width_at(5) == 16);
    CHECK(micro.distinct_widths() == std::vector<int>{8, 16});
}

}  // TEST_SUITE
