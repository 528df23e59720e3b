// Test-only reference implementations, kept independent of the library code
// paths they check: plain-loop math, brute-force pair counting, BFS
// reachability, and a straight-line DAG interpreter.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "hypernas/archspace.hpp"
#include "hypernas/hypernet.hpp"
#include "hypernas/minibench.hpp"
#include "hypernas/tensor.hpp"

namespace oracles {

using hypernas::ArchitectureSpec;
using hypernas::CellSpec;
using hypernas::SearchSpaceProfile;
using hypernas::Tensor;

// ---- finite differences -------------------------------------------------

// Central difference of a scalar-valued callable w.r.t. one tensor entry.
template <typename F>
double central_diff(F&& f, Tensor& t, int64_t idx, double h = 1e-5) {
    const double orig = t.at(idx);
    t.at(idx) = orig + h;
    const double hi = f();
    t.at(idx) = orig - h;
    const double lo = f();
    t.at(idx) = orig;
    return (hi - lo) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    const double mag = std::max(std::fabs(a), std::fabs(b));
    if (mag == 0.0) return 0.0;
    return std::fabs(a - b) / mag;
}

// Error with an absolute floor, for comparing against finite differences
// whose noise floor sits near 1e-9 at h=1e-5.
inline bool grad_close(double analytic, double numeric, double tol, double abs_floor = 1e-7) {
    const double mag = std::max(std::fabs(analytic), std::fabs(numeric));
    return std::fabs(analytic - numeric) <= std::max(tol * mag, abs_floor);
}

// ---- dense-loop GCN layer -------------------------------------------------

// 1/2 relu(E V W+) + 1/2 relu(E^T V W-) with explicit index loops.
inline Tensor gcn_layer_reference(const Tensor& e, const Tensor& v, const Tensor& wf,
                                  const Tensor& wb) {
    const int64_t F = e.dim(0), d = v.dim(1);
    Tensor out({F, d});
    for (int64_t branch = 0; branch < 2; ++branch) {
        const Tensor& w = branch == 0 ? wf : wb;
        for (int64_t i = 0; i < F; ++i)
            for (int64_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (int64_t k = 0; k < F; ++k) {
                    const double adj = branch == 0 ? e.at(i, k) : e.at(k, i);
                    if (adj == 0.0) continue;
                    for (int64_t m = 0; m < d; ++m) acc += adj * v.at(k, m) * w.at(m, j);
                }
                out.at(i, j) += 0.5 * std::max(acc, 0.0);
            }
    }
    return out;
}

// ---- rank metrics ---------------------------------------------------------

// O(n^2) tau-b by direct pair counting.
inline std::optional<double> kendall_tau_bruteforce(const std::vector<double>& x,
                                                    const std::vector<double>& y) {
    const int64_t n = static_cast<int64_t>(x.size());
    int64_t concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) {
            const double dx = x[static_cast<size_t>(i)] - x[static_cast<size_t>(j)];
            const double dy = y[static_cast<size_t>(i)] - y[static_cast<size_t>(j)];
            if (dx == 0.0 && dy == 0.0) {
                ++tie_x;
                ++tie_y;
            } else if (dx == 0.0) {
                ++tie_x;
            } else if (dy == 0.0) {
                ++tie_y;
            } else if ((dx > 0.0) == (dy > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    const int64_t n0 = n * (n - 1) / 2;
    const double d1 = static_cast<double>(n0 - tie_x);
    const double d2 = static_cast<double>(n0 - tie_y);
    if (d1 <= 0.0 || d2 <= 0.0) return std::nullopt;
    return static_cast<double>(concordant - discordant) / std::sqrt(d1 * d2);
}

// Direct-definition Spearman: fractional ranks by pair counting, then a
// two-pass Pearson correlation.
inline std::optional<double> spearman_reference(const std::vector<double>& x,
                                                const std::vector<double>& y) {
    const size_t n = x.size();
    auto ranks = [&](const std::vector<double>& v) {
        std::vector<double> r(n);
        for (size_t i = 0; i < n; ++i) {
            int64_t less = 0, equal = 0;
            for (size_t j = 0; j < n; ++j) {
                if (v[j] < v[i]) ++less;
                if (v[j] == v[i]) ++equal;
            }
            r[i] = static_cast<double>(less) + 1.0 + static_cast<double>(equal - 1) / 2.0;
        }
        return r;
    };
    const std::vector<double> rx = ranks(x), ry = ranks(y);
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

// ---- pareto ---------------------------------------------------------------

inline std::vector<std::vector<double>> pareto_front_bruteforce(
    const std::vector<std::vector<double>>& pts) {
    std::vector<std::vector<double>> out;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (size_t j = 0; j < pts.size() && !dominated; ++j) {
            if (j == i) continue;
            bool all_le = true, one_lt = false;
            for (size_t t = 0; t < pts[i].size(); ++t) {
                if (pts[j][t] > pts[i][t]) all_le = false;
                if (pts[j][t] < pts[i][t]) one_lt = true;
            }
            dominated = all_le && one_lt;
        }
        if (!dominated) out.push_back(pts[i]);
    }
    return out;
}

// ---- adaptive multi-task loss, straight from the formula ------------------

inline double total_loss_reference(double lp, double lh, double up, double uh, double q) {
    auto term = [&](double l, double u) {
        return std::pow(l, q - 1.0) / (2.0 * u * u) * l + std::log(1.0 + u * u);
    };
    return term(lp, up) + term(lh, uh);
}

// ---- reachability by BFS ---------------------------------------------------

inline std::vector<bool> on_io_path_bfs(const CellSpec& cell) {
    const int F = cell.F;
    auto bfs = [&](int start, bool forward) {
        std::vector<bool> seen(static_cast<size_t>(F), false);
        std::queue<int> q;
        q.push(start);
        seen[static_cast<size_t>(start)] = true;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v = 0; v < F; ++v) {
                const bool has_edge = forward ? cell.edge(u, v) : cell.edge(v, u);
                if (has_edge && !seen[static_cast<size_t>(v)]) {
                    seen[static_cast<size_t>(v)] = true;
                    q.push(v);
                }
            }
        }
        return seen;
    };
    const std::vector<bool> from_in = bfs(0, true);
    const std::vector<bool> to_out = bfs(F - 1, false);
    std::vector<bool> out(static_cast<size_t>(F));
    for (int i = 0; i < F; ++i)
        out[static_cast<size_t>(i)] = from_in[static_cast<size_t>(i)] && to_out[static_cast<size_t>(i)];
    return out;
}

// ---- reference DAG interpreter ---------------------------------------------

struct RefImage {
    int64_t n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;
    double& at(int64_t ni, int64_t ci, int64_t hi, int64_t wi) {
        return v[static_cast<size_t>(((ni * c + ci) * h + hi) * w + wi)];
    }
    double at(int64_t ni, int64_t ci, int64_t hi, int64_t wi) const {
        return v[static_cast<size_t>(((ni * c + ci) * h + hi) * w + wi)];
    }
};

inline RefImage ref_from_tensor(const Tensor& t) {
    RefImage r;
    r.n = t.dim(0);
    r.c = t.dim(1);
    r.h = t.dim(2);
    r.w = t.dim(3);
    r.v = t.data;
    return r;
}

inline RefImage ref_conv(const RefImage& x, const Tensor& w, int stride, int pad) {
    RefImage o;
    o.n = x.n;
    o.c = w.dim(0);
    o.h = (x.h + 2 * pad - w.dim(2)) / stride + 1;
    o.w = (x.w + 2 * pad - w.dim(3)) / stride + 1;
    o.v.assign(static_cast<size_t>(o.n * o.c * o.h * o.w), 0.0);
    for (int64_t ni = 0; ni < o.n; ++ni)
        for (int64_t co = 0; co < o.c; ++co)
            for (int64_t ho = 0; ho < o.h; ++ho)
                for (int64_t wo = 0; wo < o.w; ++wo) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < x.c; ++ci)
                        for (int64_t kh = 0; kh < w.dim(2); ++kh)
                            for (int64_t kw = 0; kw < w.dim(3); ++kw) {
                                const int64_t ih = ho * stride - pad + kh;
                                const int64_t iw = wo * stride - pad + kw;
                                if (ih < 0 || ih >= x.h || iw < 0 || iw >= x.w) continue;
                                acc += x.at(ni, ci, ih, iw) * w.at(co, ci, kh, kw);
                            }
                    o.at(ni, co, ho, wo) = acc;
                }
    return o;
}

inline RefImage ref_bn_relu(const RefImage& x, double eps = 1e-5) {
    RefImage o = x;
    for (int64_t ci = 0; ci < x.c; ++ci) {
        double mean = 0.0, var = 0.0;
        const double m = static_cast<double>(x.n * x.h * x.w);
        for (int64_t ni = 0; ni < x.n; ++ni)
            for (int64_t hi = 0; hi < x.h; ++hi)
                for (int64_t wi = 0; wi < x.w; ++wi) mean += x.at(ni, ci, hi, wi);
        mean /= m;
        for (int64_t ni = 0; ni < x.n; ++ni)
            for (int64_t hi = 0; hi < x.h; ++hi)
                for (int64_t wi = 0; wi < x.w; ++wi) {
                    const double d = x.at(ni, ci, hi, wi) - mean;
                    var += d * d;
                }
        var /= m;
        const double is = 1.0 / std::sqrt(var + eps);
        for (int64_t ni = 0; ni < x.n; ++ni)
            for (int64_t hi = 0; hi < x.h; ++hi)
                for (int64_t wi = 0; wi < x.w; ++wi)
                    o.at(ni, ci, hi, wi) = std::max((x.at(ni, ci, hi, wi) - mean) * is, 0.0);
    }
    return o;
}

inline RefImage ref_pool(const RefImage& x, int k, int stride, int pad_lo, bool avg) {
    RefImage o;
    o.n = x.n;
    o.c = x.c;
    const int pad_hi = avg ? k - 1 - pad_lo : k - 1 - pad_lo;
    o.h = (x.h + pad_lo + pad_hi - k) / stride + 1;
    o.w = (x.w + pad_lo + pad_hi - k) / stride + 1;
    o.v.assign(static_cast<size_t>(o.n * o.c * o.h * o.w), 0.0);
    for (int64_t ni = 0; ni < o.n; ++ni)
        for (int64_t ci = 0; ci < o.c; ++ci)
            for (int64_t ho = 0; ho < o.h; ++ho)
                for (int64_t wo = 0; wo < o.w; ++wo) {
                    double acc = avg ? 0.0 : -1e300;
                    for (int kh = 0; kh < k; ++kh)
                        for (int kw = 0; kw < k; ++kw) {
                            const int64_t ih = ho * stride - pad_lo + kh;
                            const int64_t iw = wo * stride - pad_lo + kw;
                            if (ih < 0 || ih >= x.h || iw < 0 || iw >= x.w) continue;
                            const double val = x.at(ni, ci, ih, iw);
                            acc = avg ? acc + val : std::max(acc, val);
                        }
                    o.at(ni, ci, ho, wo) = avg ? acc / (k * k) : (acc == -1e300 ? 0.0 : acc);
                }
    return o;
}

// Downsample used at reduction-cell inputs: 2x2 stride-2 average pool, then
// channel duplication.
inline RefImage ref_reduce_input(const RefImage& x) {
    RefImage p;
    p.n = x.n;
    p.c = x.c;
    p.h = x.h / 2;
    p.w = x.w / 2;
    p.v.assign(static_cast<size_t>(p.n * p.c * p.h * p.w), 0.0);
    for (int64_t ni = 0; ni < p.n; ++ni)
        for (int64_t ci = 0; ci < p.c; ++ci)
            for (int64_t hi = 0; hi < p.h; ++hi)
                for (int64_t wi = 0; wi < p.w; ++wi)
                    p.at(ni, ci, hi, wi) =
                        0.25 * (x.at(ni, ci, 2 * hi, 2 * wi) + x.at(ni, ci, 2 * hi + 1, 2 * wi) +
                                x.at(ni, ci, 2 * hi, 2 * wi + 1) + x.at(ni, ci, 2 * hi + 1, 2 * wi + 1));
    RefImage o;
    o.n = p.n;
    o.c = 2 * p.c;
    o.h = p.h;
    o.w = p.w;
    o.v.resize(static_cast<size_t>(o.n * o.c * o.h * o.w));
    for (int64_t ni = 0; ni < o.n; ++ni)
        for (int64_t ci = 0; ci < o.c; ++ci)
            for (int64_t hi = 0; hi < o.h; ++hi)
                for (int64_t wi = 0; wi < o.w; ++wi)
                    o.at(ni, ci, hi, wi) = p.at(ni, ci % p.c, hi, wi);
    return o;
}

// Full target-network forward with weights supplied per (cell, node).
inline Tensor target_forward_reference(const ArchitectureSpec& arch,
                                       const SearchSpaceProfile& profile,
                                       const std::map<std::pair<int, int>, Tensor>& weights,
                                       const Tensor& stem_w, const Tensor& cls_w,
                                       const Tensor& images) {
    RefImage x = ref_from_tensor(images);
    x = ref_conv(x, stem_w, 1, 0);
    for (int ci = 0; ci < arch.cell_count(); ++ci) {
        const CellSpec& cell = arch.cells[static_cast<size_t>(ci)];
        const bool reduction = arch.roles[static_cast<size_t>(ci)] == hypernas::CellRole::Reduction;
        RefImage cell_in = reduction ? ref_reduce_input(x) : x;
        std::vector<RefImage> node_out(static_cast<size_t>(cell.F));
        node_out[0] = cell_in;
        for (int v = 1; v < cell.F; ++v) {
            RefImage s;
            bool first = true;
            for (int i = 0; i < v; ++i) {
                if (!cell.edge(i, v)) continue;
                if (first) {
                    s = node_out[static_cast<size_t>(i)];
                    first = false;
                } else {
                    for (size_t k = 0; k < s.v.size(); ++k)
                        s.v[k] += node_out[static_cast<size_t>(i)].v[k];
                }
            }
            if (v == cell.F - 1) {
                node_out[static_cast<size_t>(v)] = s;
                continue;
            }
            const hypernas::OpDef& op =
                profile.vocab.ops[static_cast<size_t>(cell.op_indices[static_cast<size_t>(v)])];
            switch (op.semantic) {
                case hypernas::OpSemantic::Conv:
                    s = ref_bn_relu(ref_conv(s, weights.at({ci, v}), 1, op.kernel / 2));
                    break;
                case hypernas::OpSemantic::Skip:
                    break;
                case hypernas::OpSemantic::AvgPool:
                    s = ref_pool(s, op.kernel, 1, (op.kernel - 1) / 2, true);
                    break;
                case hypernas::OpSemantic::MaxPool:
                    s = ref_pool(s, op.kernel, 1, (op.kernel - 1) / 2, false);
                    break;
                case hypernas::OpSemantic::Zero:
                    std::fill(s.v.begin(), s.v.end(), 0.0);
                    break;
            }
            node_out[static_cast<size_t>(v)] = s;
        }
        x = node_out.back();
    }
    // global average pool + linear classifier
    Tensor logits({x.n, cls_w.dim(1)});
    for (int64_t ni = 0; ni < x.n; ++ni)
        for (int64_t cj = 0; cj < cls_w.dim(1); ++cj) {
            double acc = 0.0;
            for (int64_t ci = 0; ci < x.c; ++ci) {
                double gap = 0.0;
                for (int64_t hi = 0; hi < x.h; ++hi)
                    for (int64_t wi = 0; wi < x.w; ++wi) gap += x.at(ni, ci, hi, wi);
                gap /= static_cast<double>(x.h * x.w);
                acc += gap * cls_w.at(ci, cj);
            }
            logits.at(ni, cj) = acc;
        }
    return logits;
}

// Nearest-template classification accuracy on a dataset: every sample is
// assigned the class of the closest (L2) noise-free pattern variant.
inline double template_classifier_accuracy(const hypernas::AuxDataset& ds,
                                           const hypernas::SynthDatasetSpec& spec) {
    std::vector<std::pair<int, std::vector<float>>> templates;
    for (int c = 0; c < spec.classes; ++c)
        for (auto& tpl : hypernas::class_templates(spec, c)) templates.emplace_back(c, tpl);
    const int64_t ss = ds.sample_size();
    int correct = 0;
    for (int i = 0; i < ds.count(); ++i) {
        const float* img = &ds.images[static_cast<size_t>(i) * static_cast<size_t>(ss)];
        double best = 1e300;
        int best_cls = -1;
        for (const auto& [cls, tpl] : templates) {
            double dist = 0.0;
            for (int64_t k = 0; k < ss; ++k) {
                const double d = static_cast<double>(img[k]) - static_cast<double>(tpl[static_cast<size_t>(k)]);
                dist += d * d;
            }
            if (dist < best) {
                best = dist;
                best_cls = cls;
            }
        }
        if (best_cls == static_cast<int>(ds.labels[static_cast<size_t>(i)])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.count());
}

}  // namespace oracles
