#include "hypernas/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace hypernas {

namespace {

void check_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) +
                                    " tensor, got " + t.shape_str());
}

}  // namespace

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
    nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, std::move(backprop)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value) { return push(std::move(value), true, nullptr); }

NodeId Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Tensor& Tape::grad_buf(NodeId id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

Tensor Tape::grad(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.data.empty()) return Tensor::zeros(n.value.shape);
    return n.grad;
}

void Tape::zero_grad() {
    for (Node& n : nodes_) n.grad = Tensor{};
}

void Tape::backward(NodeId loss) {
    const Node& ln = nodes_[static_cast<size_t>(loss)];
    if (ln.value.size() != 1)
        throw std::logic_error("backward: loss must be a scalar, got " + ln.value.shape_str());
    grad_buf(loss).data[0] += 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.data.empty() || !n.backprop) continue;
        n.backprop(*this);
    }
}

void Tape::note_kink(const Tensor& input) {
    for (double v : input.data) min_kink_distance_ = std::min(min_kink_distance_, std::fabs(v));
}

// ---------------------------------------------------------------------------
// arithmetic
// ---------------------------------------------------------------------------

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check_rank(A, 2, "matmul");
    check_rank(B, 2, "matmul");
    if (A.dim(1) != B.dim(0))
        throw std::invalid_argument("matmul: inner dimensions disagree: " + A.shape_str() + " x " +
                                    B.shape_str());
    const int64_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        double* orow = &out.data[static_cast<size_t>(i * n)];
        for (int64_t p = 0; p < k; ++p) {
            const double av = A.at(i, p);
            const double* brow = &B.data[static_cast<size_t>(p * n)];
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    const bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b, m, k, n](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& A2 = t.value(a);
            const Tensor& B2 = t.value(b);
            if (t.requires_grad(a)) {  // dA = G * B^T
                Tensor& dA = t.grad_buf(a);
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = &G.data[static_cast<size_t>(i * n)];
                        const double* brow = &B2.data[static_cast<size_t>(p * n)];
                        for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        dA.at(i, p) += acc;
                    }
            }
            if (t.requires_grad(b)) {  // dB = A^T * G
                Tensor& dB = t.grad_buf(b);
                for (int64_t p = 0; p < k; ++p)
                    for (int64_t i = 0; i < m; ++i) {
                        const double av = A2.at(i, p);
                        if (av == 0.0) continue;
                        const double* grow = &G.data[static_cast<size_t>(i * n)];
                        double* drow = &dB.data[static_cast<size_t>(p * n)];
                        for (int64_t j = 0; j < n; ++j) drow[j] += av * grow[j];
                    }
            }
        };
    }
    return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("add: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            if (t.requires_grad(a)) {
                Tensor& dA = t.grad_buf(a);
                for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i];
            }
            if (t.requires_grad(b)) {
                Tensor& dB = t.grad_buf(b);
                for (size_t i = 0; i < G.data.size(); ++i) dB.data[i] += G.data[i];
            }
        };
    }
    return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("sub: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            if (t.requires_grad(a)) {
                Tensor& dA = t.grad_buf(a);
                for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i];
            }
            if (t.requires_grad(b)) {
                Tensor& dB = t.grad_buf(b);
                for (size_t i = 0; i < G.data.size(); ++i) dB.data[i] -= G.data[i];
            }
        };
    }
    return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("mul: shape mismatch " + A.shape_str() + " vs " + B.shape_str());
    Tensor out = A;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    const bool rg = requires_grad(a) || requires_grad(b);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, b](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& A2 = t.value(a);
            const Tensor& B2 = t.value(b);
            if (t.requires_grad(a)) {
                Tensor& dA = t.grad_buf(a);
                for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i] * B2.data[i];
            }
            if (t.requires_grad(b)) {
                Tensor& dB = t.grad_buf(b);
                for (size_t i = 0; i < G.data.size(); ++i) dB.data[i] += G.data[i] * A2.data[i];
            }
        };
    }
    return id;
}

NodeId Tape::scale(NodeId a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, c](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += c * G.data[i];
        };
    }
    return id;
}

NodeId Tape::add_rowvec(NodeId a, NodeId rvec) {
    const Tensor& A = value(a);
    const Tensor& R = value(rvec);
    check_rank(A, 2, "add_rowvec");
    check_rank(R, 2, "add_rowvec");
    if (R.dim(0) != 1 || R.dim(1) != A.dim(1))
        throw std::invalid_argument("add_rowvec: want [1," + std::to_string(A.dim(1)) + "], got " +
                                    R.shape_str());
    const int64_t m = A.dim(0), n = A.dim(1);
    Tensor out = A;
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(i, j) += R.at(0, j);
    const bool rg = requires_grad(a) || requires_grad(rvec);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, rvec, m, n](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            if (t.requires_grad(a)) {
                Tensor& dA = t.grad_buf(a);
                for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i];
            }
            if (t.requires_grad(rvec)) {
                Tensor& dR = t.grad_buf(rvec);
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) dR.at(0, j) += G.at(i, j);
            }
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// elementwise nonlinearities
// ---------------------------------------------------------------------------

NodeId Tape::relu(NodeId a) {
    const Tensor& A = value(a);
    note_kink(A);
    Tensor out = A;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& A2 = t.value(a);
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i)
                if (A2.data[i] > 0.0) dA.data[i] += G.data[i];
        };
    }
    return id;
}

NodeId Tape::sigmoid(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                            : std::exp(v) / (1.0 + std::exp(v));
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& S = t.nodes_[static_cast<size_t>(id)].value;
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i)
                dA.data[i] += G.data[i] * S.data[i] * (1.0 - S.data[i]);
        };
    }
    return id;
}

NodeId Tape::softplus(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& A2 = t.value(a);
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i) {
                const double x = A2.data[i];
                const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                dA.data[i] += G.data[i] * s;
            }
        };
    }
    return id;
}

NodeId Tape::exp(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::exp(v);
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& E = t.nodes_[static_cast<size_t>(id)].value;
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i] * E.data[i];
        };
    }
    return id;
}

NodeId Tape::log(NodeId a) {
    const Tensor& A = value(a);
    for (double v : A.data)
        if (v <= 0.0) throw std::domain_error("log: non-positive input");
    Tensor out = A;
    for (double& v : out.data) v = std::log(v);
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& A2 = t.value(a);
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i] / A2.data[i];
        };
    }
    return id;
}

NodeId Tape::pow_const(NodeId a, double q) {
    if (q < 1.0) throw std::invalid_argument("pow_const: exponent must be >= 1");
    const Tensor& A = value(a);
    for (double v : A.data)
        if (v < 0.0) throw std::domain_error("pow_const: negative base");
    Tensor out = A;
    for (double& v : out.data) v = std::pow(v, q);
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, q](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& A2 = t.value(a);
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i) {
                const double x = A2.data[i];
                // d/dx x^q = q x^(q-1); at x=0 this is 0 for q>1 and 1 for q=1.
                double d;
                if (x == 0.0)
                    d = q == 1.0 ? 1.0 : 0.0;
                else
                    d = q * std::pow(x, q - 1.0);
                dA.data[i] += G.data[i] * d;
            }
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// reductions / shape
// ---------------------------------------------------------------------------

NodeId Tape::sum_all(NodeId a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    const bool rg = requires_grad(a);
    NodeId id = push(Tensor::scalar(s), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const double g = t.nodes_[static_cast<size_t>(id)].grad.data[0];
            Tensor& dA = t.grad_buf(a);
            for (double& v : dA.data) v += g;
        };
    }
    return id;
}

NodeId Tape::mean_all(NodeId a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    const double inv = 1.0 / static_cast<double>(A.size());
    const bool rg = requires_grad(a);
    NodeId id = push(Tensor::scalar(s * inv), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, inv](Tape& t) {
            const double g = t.nodes_[static_cast<size_t>(id)].grad.data[0] * inv;
            Tensor& dA = t.grad_buf(a);
            for (double& v : dA.data) v += g;
        };
    }
    return id;
}

NodeId Tape::mean_rows(NodeId a) {
    const Tensor& A = value(a);
    check_rank(A, 2, "mean_rows");
    const int64_t r = A.dim(0), c = A.dim(1);
    Tensor out({1, c});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out.at(0, j) += A.at(i, j);
    const double inv = 1.0 / static_cast<double>(r);
    for (double& v : out.data) v *= inv;
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, r, c, inv](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dA = t.grad_buf(a);
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j) dA.at(i, j) += G.at(0, j) * inv;
        };
    }
    return id;
}

NodeId Tape::row(NodeId a, int64_t i) {
    const Tensor& A = value(a);
    check_rank(A, 2, "row");
    if (i < 0 || i >= A.dim(0)) throw std::out_of_range("row: index out of range");
    const int64_t c = A.dim(1);
    Tensor out({1, c});
    for (int64_t j = 0; j < c; ++j) out.at(0, j) = A.at(i, j);
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, i, c](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dA = t.grad_buf(a);
            for (int64_t j = 0; j < c; ++j) dA.at(i, j) += G.at(0, j);
        };
    }
    return id;
}

NodeId Tape::gather_rows(NodeId table, std::vector<int> idx) {
    const Tensor& T = value(table);
    check_rank(T, 2, "gather_rows");
    const int64_t c = T.dim(1);
    for (int i : idx)
        if (i < 0 || i >= T.dim(0)) throw std::out_of_range("gather_rows: index out of range");
    Tensor out({static_cast<int64_t>(idx.size()), c});
    for (size_t r = 0; r < idx.size(); ++r)
        for (int64_t j = 0; j < c; ++j) out.at(static_cast<int64_t>(r), j) = T.at(idx[r], j);
    const bool rg = requires_grad(table);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, table, idx = std::move(idx), c](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dT = t.grad_buf(table);
            for (size_t r = 0; r < idx.size(); ++r)
                for (int64_t j = 0; j < c; ++j) dT.at(idx[r], j) += G.at(static_cast<int64_t>(r), j);
        };
    }
    return id;
}

NodeId Tape::reshape(NodeId a, std::vector<int64_t> shape) {
    const Tensor& A = value(a);
    if (Tensor::count(shape) != A.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(std::move(shape), A.data);
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dA = t.grad_buf(a);
            for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i];
        };
    }
    return id;
}

NodeId Tape::take_prefix(NodeId a, int64_t n) {
    const Tensor& A = value(a);
    if (n <= 0 || n > A.size()) throw std::invalid_argument("take_prefix: bad length");
    Tensor out({n});
    for (int64_t i = 0; i < n; ++i) out.data[static_cast<size_t>(i)] = A.data[static_cast<size_t>(i)];
    const bool rg = requires_grad(a);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, a, n](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dA = t.grad_buf(a);
            for (int64_t i = 0; i < n; ++i) dA.data[static_cast<size_t>(i)] += G.data[static_cast<size_t>(i)];
        };
    }
    return id;
}

// ---------------------------------------------------------------------------
// image ops (NCHW)
// ---------------------------------------------------------------------------

NodeId Tape::conv2d(NodeId x, NodeId w, int stride, int pad) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    check_rank(X, 4, "conv2d");
    check_rank(W, 4, "conv2d");
    if (X.dim(1) != W.dim(1))
        throw std::invalid_argument("conv2d: channel mismatch " + X.shape_str() + " vs " + W.shape_str());
    if (W.dim(2) != W.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
    const int64_t N = X.dim(0), CI = X.dim(1), H = X.dim(2), Wd = X.dim(3);
    const int64_t CO = W.dim(0), K = W.dim(2);
    const int64_t HO = (H + 2 * pad - K) / stride + 1;
    const int64_t WO = (Wd + 2 * pad - K) / stride + 1;
    if (HO <= 0 || WO <= 0) throw std::invalid_argument("conv2d: empty output");
    Tensor out({N, CO, HO, WO});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < CO; ++co) {
            double* oplane = &out.data[static_cast<size_t>(((n * CO + co) * HO) * WO)];
            for (int64_t ci = 0; ci < CI; ++ci) {
                const double* xplane = &X.data[static_cast<size_t>(((n * CI + ci) * H) * Wd)];
                for (int64_t kh = 0; kh < K; ++kh)
                    for (int64_t kw = 0; kw < K; ++kw) {
                        const double wv = W.at(co, ci, kh, kw);
                        if (wv == 0.0) continue;
                        for (int64_t ho = 0; ho < HO; ++ho) {
                            const int64_t ih = ho * stride - pad + kh;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xplane + ih * Wd;
                            double* orow = oplane + ho * WO;
                            for (int64_t wo = 0; wo < WO; ++wo) {
                                const int64_t iw = wo * stride - pad + kw;
                                if (iw < 0 || iw >= Wd) continue;
                                orow[wo] += wv * xrow[iw];
                            }
                        }
                    }
            }
        }
    const bool rg = requires_grad(x) || requires_grad(w);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, x, w, stride, pad](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& X2 = t.value(x);
            const Tensor& W2 = t.value(w);
            const int64_t N = X2.dim(0), CI = X2.dim(1), H = X2.dim(2), Wd = X2.dim(3);
            const int64_t CO = W2.dim(0), K = W2.dim(2);
            const int64_t HO = G.dim(2), WO = G.dim(3);
            if (t.requires_grad(x)) {
                Tensor& dX = t.grad_buf(x);
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t co = 0; co < CO; ++co) {
                        const double* gplane = &G.data[static_cast<size_t>(((n * CO + co) * HO) * WO)];
                        for (int64_t ci = 0; ci < CI; ++ci) {
                            double* dxplane = &dX.data[static_cast<size_t>(((n * CI + ci) * H) * Wd)];
                            for (int64_t kh = 0; kh < K; ++kh)
                                for (int64_t kw = 0; kw < K; ++kw) {
                                    const double wv = W2.at(co, ci, kh, kw);
                                    if (wv == 0.0) continue;
                                    for (int64_t ho = 0; ho < HO; ++ho) {
                                        const int64_t ih = ho * stride - pad + kh;
                                        if (ih < 0 || ih >= H) continue;
                                        const double* grow = gplane + ho * WO;
                                        double* dxrow = dxplane + ih * Wd;
                                        for (int64_t wo = 0; wo < WO; ++wo) {
                                            const int64_t iw = wo * stride - pad + kw;
                                            if (iw < 0 || iw >= Wd) continue;
                                            dxrow[iw] += wv * grow[wo];
                                        }
                                    }
                                }
                        }
                    }
            }
            if (t.requires_grad(w)) {
                Tensor& dW = t.grad_buf(w);
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t co = 0; co < CO; ++co) {
                        const double* gplane = &G.data[static_cast<size_t>(((n * CO + co) * HO) * WO)];
                        for (int64_t ci = 0; ci < CI; ++ci) {
                            const double* xplane = &X2.data[static_cast<size_t>(((n * CI + ci) * H) * Wd)];
                            for (int64_t kh = 0; kh < K; ++kh)
                                for (int64_t kw = 0; kw < K; ++kw) {
                                    double acc = 0.0;
                                    for (int64_t ho = 0; ho < HO; ++ho) {
                                        const int64_t ih = ho * stride - pad + kh;
                                        if (ih < 0 || ih >= H) continue;
                                        const double* grow = gplane + ho * WO;
                                        const double* xrow = xplane + ih * Wd;
                                        for (int64_t wo = 0; wo < WO; ++wo) {
                                            const int64_t iw = wo * stride - pad + kw;
                                            if (iw < 0 || iw >= Wd) continue;
                                            acc += grow[wo] * xrow[iw];
                                        }
                                    }
                                    dW.at(co, ci, kh, kw) += acc;
                                }
                        }
                    }
            }
        };
    }
    return id;
}

NodeId Tape::avgpool2d(NodeId x, int k, int stride, int pad_lo, int pad_hi) {
    const Tensor& X = value(x);
    check_rank(X, 4, "avgpool2d");
    const int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const int64_t HO = (H + pad_lo + pad_hi - k) / stride + 1;
    const int64_t WO = (W + pad_lo + pad_hi - k) / stride + 1;
    if (HO <= 0 || WO <= 0) throw std::invalid_argument("avgpool2d: empty output");
    const double inv = 1.0 / static_cast<double>(k * k);  // zero padding counts in the divisor
    Tensor out({N, C, HO, WO});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ho = 0; ho < HO; ++ho)
                for (int64_t wo = 0; wo < WO; ++wo) {
                    double acc = 0.0;
                    for (int kh = 0; kh < k; ++kh) {
                        const int64_t ih = ho * stride - pad_lo + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (int kw = 0; kw < k; ++kw) {
                            const int64_t iw = wo * stride - pad_lo + kw;
                            if (iw < 0 || iw >= W) continue;
                            acc += X.at(n, c, ih, iw);
                        }
                    }
                    out.at(n, c, ho, wo) = acc * inv;
                }
    const bool rg = requires_grad(x);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, x, k, stride, pad_lo](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dX = t.grad_buf(x);
            const int64_t N = dX.dim(0), C = dX.dim(1), H = dX.dim(2), W = dX.dim(3);
            const int64_t HO = G.dim(2), WO = G.dim(3);
            const double inv = 1.0 / static_cast<double>(k * k);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t ho = 0; ho < HO; ++ho)
                        for (int64_t wo = 0; wo < WO; ++wo) {
                            const double g = G.at(n, c, ho, wo) * inv;
                            for (int kh = 0; kh < k; ++kh) {
                                const int64_t ih = ho * stride - pad_lo + kh;
                                if (ih < 0 || ih >= H) continue;
                                for (int kw = 0; kw < k; ++kw) {
                                    const int64_t iw = wo * stride - pad_lo + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    dX.at(n, c, ih, iw) += g;
                                }
                            }
                        }
        };
    }
    return id;
}

NodeId Tape::maxpool2d(NodeId x, int k, int stride, int pad_lo, int pad_hi) {
    const Tensor& X = value(x);
    check_rank(X, 4, "maxpool2d");
    const int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const int64_t HO = (H + pad_lo + pad_hi - k) / stride + 1;
    const int64_t WO = (W + pad_lo + pad_hi - k) / stride + 1;
    if (HO <= 0 || WO <= 0) throw std::invalid_argument("maxpool2d: empty output");
    Tensor out({N, C, HO, WO});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.size()), -1);
    size_t oidx = 0;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t ho = 0; ho < HO; ++ho)
                for (int64_t wo = 0; wo < WO; ++wo, ++oidx) {
                    double best = -std::numeric_limits<double>::infinity();
                    int64_t best_at = -1;
                    double second = best;
                    for (int kh = 0; kh < k; ++kh) {
                        const int64_t ih = ho * stride - pad_lo + kh;
                        if (ih < 0 || ih >= H) continue;
                        for (int kw = 0; kw < k; ++kw) {
                            const int64_t iw = wo * stride - pad_lo + kw;
                            if (iw < 0 || iw >= W) continue;
                            const double v = X.at(n, c, ih, iw);
                            if (v > best) {
                                second = best;
                                best = v;
                                best_at = ((n * C + c) * H + ih) * W + iw;
                            } else if (v > second) {
                                second = v;
                            }
                        }
                    }
                    if (best_at < 0) {  // window entirely in padding
                        best = 0.0;
                    } else if (std::isfinite(second)) {
                        min_kink_distance_ = std::min(min_kink_distance_, best - second);
                    }
                    out.data[oidx] = best;
                    (*argmax)[oidx] = best_at;
                }
    const bool rg = requires_grad(x);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, x, argmax](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dX = t.grad_buf(x);
            for (size_t i = 0; i < G.data.size(); ++i) {
                const int64_t src = (*argmax)[i];
                if (src >= 0) dX.data[static_cast<size_t>(src)] += G.data[i];
            }
        };
    }
    return id;
}

NodeId Tape::batchnorm2d(NodeId x, double eps) {
    const Tensor& X = value(x);
    check_rank(X, 4, "batchnorm2d");
    const int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const int64_t M = N * H * W;  // reduction size per channel
    auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
    Tensor out(X.shape);
    for (int64_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) mean += X.at(n, c, h, w);
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    const double d = X.at(n, c, h, w) - mean;
                    var += d * d;
                }
        var /= static_cast<double>(M);
        const double is = 1.0 / std::sqrt(var + eps);
        (*invstd)[static_cast<size_t>(c)] = is;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) out.at(n, c, h, w) = (X.at(n, c, h, w) - mean) * is;
    }
    const bool rg = requires_grad(x);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, x, invstd](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            const Tensor& Y = t.nodes_[static_cast<size_t>(id)].value;  // normalized output
            Tensor& dX = t.grad_buf(x);
            const int64_t N = Y.dim(0), C = Y.dim(1), H = Y.dim(2), W = Y.dim(3);
            const double invM = 1.0 / static_cast<double>(N * H * W);
            for (int64_t c = 0; c < C; ++c) {
                double g_mean = 0.0, gy_mean = 0.0;
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t h = 0; h < H; ++h)
                        for (int64_t w = 0; w < W; ++w) {
                            const double g = G.at(n, c, h, w);
                            g_mean += g;
                            gy_mean += g * Y.at(n, c, h, w);
                        }
                g_mean *= invM;
                gy_mean *= invM;
                const double is = (*invstd)[static_cast<size_t>(c)];
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t h = 0; h < H; ++h)
                        for (int64_t w = 0; w < W; ++w)
                            dX.at(n, c, h, w) +=
                                is * (G.at(n, c, h, w) - g_mean - Y.at(n, c, h, w) * gy_mean);
            }
        };
    }
    return id;
}

NodeId Tape::channel_dup(NodeId x) {
    const Tensor& X = value(x);
    check_rank(X, 4, "channel_dup");
    const int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    Tensor out({N, 2 * C, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    const double v = X.at(n, c, h, w);
                    out.at(n, c, h, w) = v;
                    out.at(n, c + C, h, w) = v;
                }
    const bool rg = requires_grad(x);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, x](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dX = t.grad_buf(x);
            const int64_t N = dX.dim(0), C = dX.dim(1), H = dX.dim(2), W = dX.dim(3);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t h = 0; h < H; ++h)
                        for (int64_t w = 0; w < W; ++w)
                            dX.at(n, c, h, w) += G.at(n, c, h, w) + G.at(n, c + C, h, w);
        };
    }
    return id;
}

NodeId Tape::global_avg_pool(NodeId x) {
    const Tensor& X = value(x);
    check_rank(X, 4, "global_avg_pool");
    const int64_t N = X.dim(0), C = X.dim(1), H = X.dim(2), W = X.dim(3);
    const double inv = 1.0 / static_cast<double>(H * W);
    Tensor out({N, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) acc += X.at(n, c, h, w);
            out.at(n, c) = acc * inv;
        }
    const bool rg = requires_grad(x);
    NodeId id = push(std::move(out), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, x, inv](Tape& t) {
            const Tensor& G = t.nodes_[static_cast<size_t>(id)].grad;
            Tensor& dX = t.grad_buf(x);
            const int64_t N = dX.dim(0), C = dX.dim(1), H = dX.dim(2), W = dX.dim(3);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const double g = G.at(n, c) * inv;
                    for (int64_t h = 0; h < H; ++h)
                        for (int64_t w = 0; w < W; ++w) dX.at(n, c, h, w) += g;
                }
        };
    }
    return id;
}

NodeId Tape::zeros_like_of(NodeId x) { return constant(Tensor::zeros(value(x).shape)); }

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
    const Tensor& L = value(logits);
    check_rank(L, 2, "softmax_cross_entropy");
    const int64_t B = L.dim(0), C = L.dim(1);
    if (static_cast<int64_t>(labels.size()) != B)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= C) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    auto probs = std::make_shared<Tensor>(L.shape);
    double loss = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < C; ++j) mx = std::max(mx, L.at(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < C; ++j) z += std::exp(L.at(i, j) - mx);
        const double lse = mx + std::log(z);
        for (int64_t j = 0; j < C; ++j) probs->at(i, j) = std::exp(L.at(i, j) - lse);
        loss += lse - L.at(i, labels[static_cast<size_t>(i)]);
    }
    loss /= static_cast<double>(B);
    const bool rg = requires_grad(logits);
    NodeId id = push(Tensor::scalar(loss), rg, nullptr);
    if (rg) {
        nodes_[static_cast<size_t>(id)].backprop = [id, logits, labels = std::move(labels),
                                                    probs](Tape& t) {
            const double g = t.nodes_[static_cast<size_t>(id)].grad.data[0];
            Tensor& dL = t.grad_buf(logits);
            const int64_t B = dL.dim(0), C = dL.dim(1);
            const double scale = g / static_cast<double>(B);
            for (int64_t i = 0; i < B; ++i)
                for (int64_t j = 0; j < C; ++j) {
                    double p = probs->at(i, j);
                    if (j == labels[static_cast<size_t>(i)]) p -= 1.0;
                    dL.at(i, j) += scale * p;
                }
        };
    }
    return id;
}

}  // namespace hypernas
