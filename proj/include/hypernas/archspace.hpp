#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hypernas/rng.hpp"

namespace hypernas {

// What a node does when the architecture is instantiated as a network.
enum class OpSemantic { Conv, Skip, AvgPool, MaxPool, Zero };

enum class OpKind { Parametric, ParameterFree };

struct OpDef {
    std::string name;
    OpKind kind = OpKind::ParameterFree;
    OpSemantic semantic = OpSemantic::Skip;
    int kernel = 0;  // conv / pool window size
    int head = -1;   // hypernetwork head id; parametric ops only
};

// The searchable operation set. Two reserved indices beyond the listed ops
// mark a cell's input and output nodes, so an op-index column is always a
// complete description of a node.
struct OpVocabulary {
    std::vector<OpDef> ops;

    int op_count() const { return static_cast<int>(ops.size()); }
    int input_index() const { return op_count(); }
    int output_index() const { return op_count() + 1; }
    int index_count() const { return op_count() + 2; }  // embedding rows

    int head_count() const;
    void check() const;  // structural invariants (unique names, head rules)
};

enum class CellRole { Normal, Reduction };

inline const char* role_name(CellRole r) { return r == CellRole::Normal ? "normal" : "reduction"; }

// One DAG cell: strictly upper-triangular adjacency over F nodes plus a
// per-node op index. Node 0 is the input node, node F-1 the output node.
struct CellSpec {
    int F = 0;
    std::vector<uint8_t> adj;     // F*F row-major, adj[i*F+j] = edge i->j
    std::vector<int> op_indices;  // length F

    static CellSpec empty(int F);

    bool edge(int i, int j) const { return adj[static_cast<size_t>(i * F + j)] != 0; }
    void set_edge(int i, int j, bool on) { adj[static_cast<size_t>(i * F + j)] = on ? 1 : 0; }

    bool operator==(const CellSpec& o) const = default;
    uint64_t content_hash() const;
};

// An ordered stack of cells with role tags; the macro structure.
struct ArchitectureSpec {
    std::vector<CellSpec> cells;
    std::vector<CellRole> roles;

    int cell_count() const { return static_cast<int>(cells.size()); }
    bool operator==(const ArchitectureSpec& o) const = default;
    uint64_t content_hash() const;
};

// Declares a search space: vocabulary, cell size, macro layout, and the
// fixed cell used at reduction positions. Normal cells are the searched
// genes; in template mode every normal position repeats one CellSpec.
struct SearchSpaceProfile {
    std::string name;
    OpVocabulary vocab;
    int F = 0;
    int N = 0;
    std::vector<int> reduction_positions;  // 1-based cell indices
    bool template_shared = true;
    CellSpec fixed_reduction_cell;  // used by sampling and mutation
    int stem_channels = 8;

    CellRole role_at(int position_1based) const;
    // Channel width of the ops inside cell at `position` (1-based). Reduction
    // cells double the running width before their internal ops run.
    int width_at(int position_1based) const;
    int max_width() const;
    std::vector<int> distinct_widths() const;

    void check() const;
};

struct BenchRecord {
    std::string id;
    ArchitectureSpec arch;
    std::optional<double> val_acc;   // normalized to [0,1]
    std::optional<double> test_acc;  // optional, [0,1]
};

struct Violation {
    std::string code;
    std::string message;
};

// ---- validation / sampling / enumeration ----

std::vector<Violation> validate_cell(const CellSpec& cell, const SearchSpaceProfile& profile);
std::vector<Violation> validate(const ArchitectureSpec& arch, const SearchSpaceProfile& profile);
bool is_valid(const ArchitectureSpec& arch, const SearchSpaceProfile& profile);

// Expands searched template cell(s) into a full architecture per the macro
// layout (reduction positions get the profile's fixed reduction cell).
ArchitectureSpec expand_architecture(const SearchSpaceProfile& profile, const CellSpec& normal_cell);

// Uniform over the profile's valid normal cells (rejection sampling).
CellSpec sample_cell(const SearchSpaceProfile& profile, Rng& rng);
ArchitectureSpec sample_random(const SearchSpaceProfile& profile, Rng& rng);

// Exhaustive, duplicate-free list of valid cells. Guarded: F <= 5 and
// |ops| <= 6, otherwise throws with the bound in the message.
std::vector<CellSpec> enumerate_cells(const SearchSpaceProfile& profile);

// ---- built-in profiles ----

// "micro": F=4, N=5, reduction at {3}, 5-op vocabulary.
// "nb101-like": F=7, N=11, reduction at {3,7}, 3-op vocabulary.
// "nb201-like": F=8, N=17, reduction at {6,12}, 5-op vocabulary.
SearchSpaceProfile builtin_profile(const std::string& name);

// Tiny layouts used by gradient checks and unit tests; same vocabulary as
// micro but N cells with a single reduction in the middle (none if N < 2).
SearchSpaceProfile micro_profile_with_layout(int N);

// ---- serialization ----

// Bench files are UTF-8, one JSON object per line.
std::vector<BenchRecord> read_bench(const std::string& path);
void write_bench(const std::string& path, const std::vector<BenchRecord>& records);
std::string bench_line(const BenchRecord& rec);
BenchRecord parse_bench_line(const std::string& line, int lineno);

SearchSpaceProfile read_profile(const std::string& path);
void write_profile(const std::string& path, const SearchSpaceProfile& profile);

// Resolves --profile arguments: a builtin name or a path to a profile file.
SearchSpaceProfile resolve_profile(const std::string& name_or_path);

}  // namespace hypernas
