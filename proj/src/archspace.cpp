#include "hypernas/archspace.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace hypernas {

using nlohmann::json;

// ---------------------------------------------------------------------------
// vocabulary
// ---------------------------------------------------------------------------

int OpVocabulary::head_count() const {
    int mx = -1;
    for (const auto& op : ops) mx = std::max(mx, op.head);
    return mx + 1;
}

void OpVocabulary::check() const {
    std::set<std::string> names;
    std::set<int> heads;
    for (const auto& op : ops) {
        if (!names.insert(op.name).second)
            throw std::invalid_argument("vocabulary: duplicate op name '" + op.name + "'");
        if (op.kind == OpKind::Parametric) {
            if (op.head < 0)
                throw std::invalid_argument("vocabulary: parametric op '" + op.name + "' has no head");
            if (!heads.insert(op.head).second)
                throw std::invalid_argument("vocabulary: head " + std::to_string(op.head) +
                                            " assigned to more than one op");
        } else if (op.head >= 0) {
            throw std::invalid_argument("vocabulary: parameter-free op '" + op.name + "' has a head");
        }
    }
    // Heads must be 0..H-1 with no gaps.
    int expect = 0;
    for (int h : heads)
        if (h != expect++)
            throw std::invalid_argument("vocabulary: head ids must be contiguous from 0");
}

// ---------------------------------------------------------------------------
// cells / architectures
// ---------------------------------------------------------------------------

CellSpec CellSpec::empty(int F) {
    CellSpec c;
    c.F = F;
    c.adj.assign(static_cast<size_t>(F) * static_cast<size_t>(F), 0);
    c.op_indices.assign(static_cast<size_t>(F), 0);
    return c;
}

uint64_t CellSpec::content_hash() const {
    uint64_t h = fnv1a64_u64(static_cast<uint64_t>(F));
    for (uint8_t b : adj) h = fnv1a64_u64(b, h);
    for (int op : op_indices) h = fnv1a64_u64(static_cast<uint64_t>(op), h);
    return h;
}

uint64_t ArchitectureSpec::content_hash() const {
    uint64_t h = fnv1a64_u64(static_cast<uint64_t>(cells.size()));
    for (const auto& c : cells) h = fnv1a64_u64(c.content_hash(), h);
    for (CellRole r : roles) h = fnv1a64_u64(static_cast<uint64_t>(r), h);
    return h;
}

CellRole SearchSpaceProfile::role_at(int position_1based) const {
    const bool red = std::find(reduction_positions.begin(), reduction_positions.end(),
                               position_1based) != reduction_positions.end();
    return red ? CellRole::Reduction : CellRole::Normal;
}

int SearchSpaceProfile::width_at(int position_1based) const {
    int w = stem_channels;
    for (int rp : reduction_positions)
        if (rp <= position_1based) w *= 2;
    return w;
}

int SearchSpaceProfile::max_width() const {
    int w = stem_channels;
    for (size_t i = 0; i < reduction_positions.size(); ++i) w *= 2;
    return w;
}

std::vector<int> SearchSpaceProfile::distinct_widths() const {
    std::set<int> ws;
    for (int p = 1; p <= N; ++p) ws.insert(width_at(p));
    return {ws.begin(), ws.end()};
}

void SearchSpaceProfile::check() const {
    vocab.check();
    if (F < 2) throw std::invalid_argument("profile: F must be >= 2");
    if (N < 1) throw std::invalid_argument("profile: N must be >= 1");
    for (int rp : reduction_positions)
        if (rp < 1 || rp > N)
            throw std::invalid_argument("profile: reduction position " + std::to_string(rp) +
                                        " outside 1.." + std::to_string(N));
    if (!reduction_positions.empty()) {
        auto v = validate_cell(fixed_reduction_cell, *this);
        if (!v.empty())
            throw std::invalid_argument("profile: fixed reduction cell invalid: " + v.front().message);
    }
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

namespace {

// Forward/backward reachability on a strictly upper-triangular DAG; nodes are
// processed in index order, which is topological.
void reachability(const CellSpec& cell, std::vector<uint8_t>& fwd, std::vector<uint8_t>& bwd) {
    const int F = cell.F;
    fwd.assign(static_cast<size_t>(F), 0);
    bwd.assign(static_cast<size_t>(F), 0);
    fwd[0] = 1;
    for (int j = 1; j < F; ++j)
        for (int i = 0; i < j; ++i)
            if (cell.edge(i, j) && fwd[static_cast<size_t>(i)]) {
                fwd[static_cast<size_t>(j)] = 1;
                break;
            }
    bwd[static_cast<size_t>(F - 1)] = 1;
    for (int i = F - 2; i >= 0; --i)
        for (int j = i + 1; j < F; ++j)
            if (cell.edge(i, j) && bwd[static_cast<size_t>(j)]) {
                bwd[static_cast<size_t>(i)] = 1;
                break;
            }
}

}  // namespace

std::vector<Violation> validate_cell(const CellSpec& cell, const SearchSpaceProfile& profile) {
    std::vector<Violation> out;
    const int F = profile.F;
    if (cell.F != F || cell.adj.size() != static_cast<size_t>(F) * static_cast<size_t>(F) ||
        cell.op_indices.size() != static_cast<size_t>(F)) {
        out.push_back({"bad-cell-shape", "cell has F=" + std::to_string(cell.F) + ", profile wants " +
                                             std::to_string(F)});
        return out;  // nothing else is meaningful
    }
    for (int i = 0; i < F; ++i)
        for (int j = 0; j <= i; ++j)
            if (cell.adj[static_cast<size_t>(i * F + j)] != 0) {
                out.push_back({"not-upper-triangular", "edge " + std::to_string(i) + "->" +
                                                           std::to_string(j) + " not upper-triangular"});
            }
    for (uint8_t b : cell.adj)
        if (b > 1) {
            out.push_back({"non-binary-adjacency", "adjacency entries must be 0/1"});
            break;
        }
    const auto& vocab = profile.vocab;
    if (cell.op_indices[0] != vocab.input_index())
        out.push_back({"bad-input-marker", "node 0 must carry the input marker"});
    if (cell.op_indices[static_cast<size_t>(F - 1)] != vocab.output_index())
        out.push_back({"bad-output-marker", "node " + std::to_string(F - 1) +
                                                " must carry the output marker"});
    for (int i = 1; i < F - 1; ++i) {
        const int op = cell.op_indices[static_cast<size_t>(i)];
        if (op < 0 || op >= vocab.op_count())
            out.push_back({"op-out-of-range", "node " + std::to_string(i) + " op index " +
                                                  std::to_string(op) + " outside vocabulary"});
    }
    std::vector<uint8_t> fwd, bwd;
    reachability(cell, fwd, bwd);
    for (int i = 0; i < F; ++i)
        if (!fwd[static_cast<size_t>(i)] || !bwd[static_cast<size_t>(i)])
            out.push_back({"dangling-node", "node " + std::to_string(i) +
                                                " lies on no input->output path"});
    return out;
}

std::vector<Violation> validate(const ArchitectureSpec& arch, const SearchSpaceProfile& profile) {
    std::vector<Violation> out;
    if (arch.cell_count() != profile.N) {
        out.push_back({"bad-cell-count", "architecture has " + std::to_string(arch.cell_count()) +
                                             " cells, profile wants " + std::to_string(profile.N)});
        return out;
    }
    if (arch.roles.size() != arch.cells.size()) {
        out.push_back({"bad-role-count", "roles list length differs from cell list length"});
        return out;
    }
    for (int p = 1; p <= profile.N; ++p) {
        if (arch.roles[static_cast<size_t>(p - 1)] != profile.role_at(p))
            out.push_back({"role-mismatch", "cell " + std::to_string(p) + " role does not match layout"});
    }
    if (profile.template_shared) {
        const CellSpec* first_normal = nullptr;
        const CellSpec* first_reduction = nullptr;
        for (size_t i = 0; i < arch.cells.size(); ++i) {
            const CellSpec*& slot =
                arch.roles[i] == CellRole::Normal ? first_normal : first_reduction;
            if (!slot)
                slot = &arch.cells[i];
            else if (!(*slot == arch.cells[i]))
                out.push_back({"template-mismatch", "cell " + std::to_string(i + 1) +
                                                        " differs from its role template"});
        }
    }
    for (size_t i = 0; i < arch.cells.size(); ++i) {
        for (auto& v : validate_cell(arch.cells[i], profile))
            out.push_back({v.code, "cell " + std::to_string(i + 1) + ": " + v.message});
    }
    return out;
}

bool is_valid(const ArchitectureSpec& arch, const SearchSpaceProfile& profile) {
    return validate(arch, profile).empty();
}

// ---------------------------------------------------------------------------
// sampling / enumeration
// ---------------------------------------------------------------------------

ArchitectureSpec expand_architecture(const SearchSpaceProfile& profile, const CellSpec& normal_cell) {
    ArchitectureSpec arch;
    arch.cells.reserve(static_cast<size_t>(profile.N));
    arch.roles.reserve(static_cast<size_t>(profile.N));
    for (int p = 1; p <= profile.N; ++p) {
        const CellRole role = profile.role_at(p);
        arch.roles.push_back(role);
        arch.cells.push_back(role == CellRole::Normal ? normal_cell : profile.fixed_reduction_cell);
    }
    return arch;
}

CellSpec sample_cell(const SearchSpaceProfile& profile, Rng& rng) {
    const int F = profile.F;
    for (int attempt = 0; attempt < 100000; ++attempt) {
        CellSpec c = CellSpec::empty(F);
        for (int i = 0; i < F; ++i)
            for (int j = i + 1; j < F; ++j) c.set_edge(i, j, rng.bernoulli(0.5));
        c.op_indices[0] = profile.vocab.input_index();
        c.op_indices[static_cast<size_t>(F - 1)] = profile.vocab.output_index();
        for (int i = 1; i < F - 1; ++i)
            c.op_indices[static_cast<size_t>(i)] = rng.uniform_int(profile.vocab.op_count());
        if (validate_cell(c, profile).empty()) return c;
    }
    throw std::runtime_error("sample_cell: no valid cell found after 100000 attempts");
}

ArchitectureSpec sample_random(const SearchSpaceProfile& profile, Rng& rng) {
    return expand_architecture(profile, sample_cell(profile, rng));
}

std::vector<CellSpec> enumerate_cells(const SearchSpaceProfile& profile) {
    const int F = profile.F;
    const int n_ops = profile.vocab.op_count();
    if (F > 5 || n_ops > 6)
        throw std::invalid_argument("enumerate_cells: refusing F=" + std::to_string(F) + ", |ops|=" +
                                    std::to_string(n_ops) + " (bound: F <= 5 and |ops| <= 6)");
    std::vector<std::pair<int, int>> slots;  // upper-triangular edge positions
    for (int i = 0; i < F; ++i)
        for (int j = i + 1; j < F; ++j) slots.emplace_back(i, j);
    const int interior = F - 2;
    std::vector<CellSpec> out;
    for (uint32_t mask = 0; mask < (1u << slots.size()); ++mask) {
        CellSpec base = CellSpec::empty(F);
        for (size_t s = 0; s < slots.size(); ++s)
            if (mask & (1u << s)) base.set_edge(slots[s].first, slots[s].second, true);
        base.op_indices[0] = profile.vocab.input_index();
        base.op_indices[static_cast<size_t>(F - 1)] = profile.vocab.output_index();
        for (int i = 1; i < F - 1; ++i) base.op_indices[static_cast<size_t>(i)] = 0;
        if (!validate_cell(base, profile).empty()) continue;
        // Odometer over interior op assignments; validity is structural only.
        std::vector<int> ops(static_cast<size_t>(std::max(interior, 0)), 0);
        while (true) {
            CellSpec c = base;
            for (int i = 0; i < interior; ++i)
                c.op_indices[static_cast<size_t>(i + 1)] = ops[static_cast<size_t>(i)];
            out.push_back(std::move(c));
            int pos = interior - 1;
            while (pos >= 0) {
                if (++ops[static_cast<size_t>(pos)] < n_ops) break;
                ops[static_cast<size_t>(pos)] = 0;
                --pos;
            }
            if (pos < 0) break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// built-in profiles
// ---------------------------------------------------------------------------

namespace {

OpVocabulary micro_vocab() {
    OpVocabulary v;
    v.ops = {
        {"conv3x3", OpKind::Parametric, OpSemantic::Conv, 3, 0},
        {"conv1x1", OpKind::Parametric, OpSemantic::Conv, 1, 1},
        {"skip", OpKind::ParameterFree, OpSemantic::Skip, 0, -1},
        {"avgpool2x2", OpKind::ParameterFree, OpSemantic::AvgPool, 2, -1},
        {"zero", OpKind::ParameterFree, OpSemantic::Zero, 0, -1},
    };
    return v;
}

CellSpec chain_cell(const OpVocabulary& vocab, int F, const std::vector<int>& interior_ops) {
    CellSpec c = CellSpec::empty(F);
    for (int i = 0; i + 1 < F; ++i) c.set_edge(i, i + 1, true);
    c.op_indices[0] = vocab.input_index();
    c.op_indices[static_cast<size_t>(F - 1)] = vocab.output_index();
    for (int i = 1; i < F - 1; ++i) c.op_indices[static_cast<size_t>(i)] = interior_ops[static_cast<size_t>(i - 1)];
    return c;
}

}  // namespace

SearchSpaceProfile builtin_profile(const std::string& name) {
    SearchSpaceProfile p;
    p.name = name;
    p.stem_channels = 8;
    p.template_shared = true;
    if (name == "micro") {
        p.vocab = micro_vocab();
        p.F = 4;
        p.N = 5;
        p.reduction_positions = {3};
        p.fixed_reduction_cell = chain_cell(p.vocab, 4, {1, 3});  // conv1x1, avgpool2x2
    } else if (name == "nb101-like") {
        p.vocab.ops = {
            {"conv3x3", OpKind::Parametric, OpSemantic::Conv, 3, 0},
            {"conv1x1", OpKind::Parametric, OpSemantic::Conv, 1, 1},
            {"maxpool3x3", OpKind::ParameterFree, OpSemantic::MaxPool, 3, -1},
        };
        p.F = 7;
        p.N = 11;
        p.reduction_positions = {3, 7};
        p.fixed_reduction_cell = chain_cell(p.vocab, 7, {1, 2, 1, 2, 1});
    } else if (name == "nb201-like") {
        p.vocab.ops = {
            {"zero", OpKind::ParameterFree, OpSemantic::Zero, 0, -1},
            {"skip", OpKind::ParameterFree, OpSemantic::Skip, 0, -1},
            {"conv1x1", OpKind::Parametric, OpSemantic::Conv, 1, 0},
            {"conv3x3", OpKind::Parametric, OpSemantic::Conv, 3, 1},
            {"avgpool3x3", OpKind::ParameterFree, OpSemantic::AvgPool, 3, -1},
        };
        p.F = 8;
        p.N = 17;
        p.reduction_positions = {6, 12};
        p.fixed_reduction_cell = chain_cell(p.vocab, 8, {3, 1, 2, 1, 3, 1});
    } else {
        throw std::invalid_argument("unknown builtin profile '" + name + "'");
    }
    p.check();
    return p;
}

SearchSpaceProfile micro_profile_with_layout(int N) {
    SearchSpaceProfile p = builtin_profile("micro");
    p.name = "micro-n" + std::to_string(N);
    p.N = N;
    if (N >= 2)
        p.reduction_positions = {N / 2 + 1};
    else
        p.reduction_positions.clear();
    p.check();
    return p;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

json cell_to_json(const CellSpec& c) {
    json adj = json::array();
    for (int i = 0; i < c.F; ++i) {
        json row = json::array();
        for (int j = 0; j < c.F; ++j) row.push_back(static_cast<int>(c.adj[static_cast<size_t>(i * c.F + j)]));
        adj.push_back(std::move(row));
    }
    return json{{"adj", std::move(adj)}, {"ops", c.op_indices}};
}

CellSpec cell_from_json(const json& j) {
    const auto& adj = j.at("adj");
    const int F = static_cast<int>(adj.size());
    CellSpec c = CellSpec::empty(F);
    for (int i = 0; i < F; ++i) {
        const auto& row = adj.at(static_cast<size_t>(i));
        if (static_cast<int>(row.size()) != F) throw std::runtime_error("ragged adjacency matrix");
        for (int jx = 0; jx < F; ++jx)
            c.adj[static_cast<size_t>(i * F + jx)] =
                static_cast<uint8_t>(row.at(static_cast<size_t>(jx)).get<int>());
    }
    c.op_indices = j.at("ops").get<std::vector<int>>();
    if (c.op_indices.size() != static_cast<size_t>(F)) throw std::runtime_error("ops length != F");
    return c;
}

double checked_acc(const json& j, const char* field, int lineno) {
    const double v = j.get<double>();
    if (!(v >= 0.0 && v <= 1.0))
        throw std::runtime_error("line " + std::to_string(lineno) + ": " + field + " " +
                                 std::to_string(v) + " outside [0,1]");
    return v;
}

}  // namespace

std::string bench_line(const BenchRecord& rec) {
    json j;
    j["id"] = rec.id;
    json cells = json::array();
    for (const auto& c : rec.arch.cells) cells.push_back(cell_to_json(c));
    j["cells"] = std::move(cells);
    json roles = json::array();
    for (CellRole r : rec.arch.roles) roles.push_back(role_name(r));
    j["roles"] = std::move(roles);
    if (rec.val_acc) j["val_acc"] = *rec.val_acc;
    if (rec.test_acc) j["test_acc"] = *rec.test_acc;
    return j.dump();
}

BenchRecord parse_bench_line(const std::string& line, int lineno) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("bench parse error at line " + std::to_string(lineno) + ": " +
                                 e.what());
    }
    try {
        BenchRecord rec;
        rec.id = j.at("id").get<std::string>();
        for (const auto& cj : j.at("cells")) rec.arch.cells.push_back(cell_from_json(cj));
        for (const auto& rj : j.at("roles")) {
            const std::string r = rj.get<std::string>();
            if (r == "normal")
                rec.arch.roles.push_back(CellRole::Normal);
            else if (r == "reduction")
                rec.arch.roles.push_back(CellRole::Reduction);
            else
                throw std::runtime_error("unknown role '" + r + "'");
        }
        if (j.contains("val_acc")) rec.val_acc = checked_acc(j["val_acc"], "val_acc", lineno);
        if (j.contains("test_acc")) rec.test_acc = checked_acc(j["test_acc"], "test_acc", lineno);
        return rec;
    } catch (const json::exception& e) {
        throw std::runtime_error("bench record error at line " + std::to_string(lineno) + ": " +
                                 e.what());
    }
}

std::vector<BenchRecord> read_bench(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open bench file '" + path + "'");
    std::vector<BenchRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        out.push_back(parse_bench_line(line, lineno));
    }
    return out;
}

void write_bench(const std::string& path, const std::vector<BenchRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open bench file '" + path + "' for writing");
    for (const auto& rec : records) out << bench_line(rec) << "\n";
    if (!out) throw std::runtime_error("write failed for bench file '" + path + "'");
}

namespace {

std::string shape_string(const OpDef& op) {
    switch (op.semantic) {
        case OpSemantic::Conv: return "conv" + std::to_string(op.kernel) + "x" + std::to_string(op.kernel);
        case OpSemantic::AvgPool: return "avgpool" + std::to_string(op.kernel) + "x" + std::to_string(op.kernel);
        case OpSemantic::MaxPool: return "maxpool" + std::to_string(op.kernel) + "x" + std::to_string(op.kernel);
        case OpSemantic::Skip: return "skip";
        case OpSemantic::Zero: return "zero";
    }
    return "skip";
}

OpDef op_from_json(const json& j) {
    OpDef op;
    op.name = j.at("name").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "parametric")
        op.kind = OpKind::Parametric;
    else if (kind == "parameter_free")
        op.kind = OpKind::ParameterFree;
    else
        throw std::runtime_error("profile: unknown op kind '" + kind + "'");
    const std::string shape = j.at("shape").get<std::string>();
    auto parse_kernel = [&](size_t prefix_len) {
        const size_t x = shape.find('x', prefix_len);
        return std::stoi(shape.substr(prefix_len, x - prefix_len));
    };
    if (shape.rfind("conv", 0) == 0) {
        op.semantic = OpSemantic::Conv;
        op.kernel = parse_kernel(4);
    } else if (shape.rfind("avgpool", 0) == 0) {
        op.semantic = OpSemantic::AvgPool;
        op.kernel = parse_kernel(7);
    } else if (shape.rfind("maxpool", 0) == 0) {
        op.semantic = OpSemantic::MaxPool;
        op.kernel = parse_kernel(7);
    } else if (shape == "skip") {
        op.semantic = OpSemantic::Skip;
    } else if (shape == "zero") {
        op.semantic = OpSemantic::Zero;
    } else {
        throw std::runtime_error("profile: unsupported op shape '" + shape + "'");
    }
    op.head = j.value("head", -1);
    if (j.contains("head") && j["head"].is_null()) op.head = -1;
    return op;
}

}  // namespace

void write_profile(const std::string& path, const SearchSpaceProfile& profile) {
    json j;
    j["name"] = profile.name;
    j["F"] = profile.F;
    j["N"] = profile.N;
    j["reduction_positions"] = profile.reduction_positions;
    j["stem_channels"] = profile.stem_channels;
    j["template_shared"] = profile.template_shared;
    json ops = json::array();
    for (const auto& op : profile.vocab.ops) {
        json oj;
        oj["name"] = op.name;
        oj["kind"] = op.kind == OpKind::Parametric ? "parametric" : "parameter_free";
        oj["shape"] = shape_string(op);
        if (op.head >= 0)
            oj["head"] = op.head;
        else
            oj["head"] = nullptr;
        ops.push_back(std::move(oj));
    }
    j["ops"] = std::move(ops);
    if (!profile.reduction_positions.empty())
        j["fixed_reduction_cell"] = cell_to_json(profile.fixed_reduction_cell);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open profile file '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

SearchSpaceProfile read_profile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open profile file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("profile parse error in '" + path + "': " + e.what());
    }
    SearchSpaceProfile p;
    p.name = j.at("name").get<std::string>();
    p.F = j.at("F").get<int>();
    p.N = j.at("N").get<int>();
    p.reduction_positions = j.at("reduction_positions").get<std::vector<int>>();
    p.stem_channels = j.value("stem_channels", 8);
    p.template_shared = j.value("template_shared", true);
    for (const auto& oj : j.at("ops")) p.vocab.ops.push_back(op_from_json(oj));
    if (j.contains("fixed_reduction_cell"))
        p.fixed_reduction_cell = cell_from_json(j["fixed_reduction_cell"]);
    p.check();
    return p;
}

SearchSpaceProfile resolve_profile(const std::string& name_or_path) {
    if (name_or_path == "micro" || name_or_path == "nb101-like" || name_or_path == "nb201-like")
        return builtin_profile(name_or_path);
    return read_profile(name_or_path);
}

}  // namespace hypernas
