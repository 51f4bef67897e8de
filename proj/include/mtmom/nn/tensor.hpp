#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mtmom/errors.hpp"
#include "mtmom/rng.hpp"

namespace mtmom::nn {

// Dense row-major matrix of doubles with a gradient buffer of the same
// shape. Rank is fixed at 2; scalars are 1x1. All arithmetic is 64-bit.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> v, g;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(int r, int c, bool rg = false)
        : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0),
          g(static_cast<size_t>(r) * c, 0.0), requires_grad(rg) {}

    size_t numel() const { return static_cast<size_t>(rows) * cols; }
    double& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
    bool scalar() const { return rows == 1 && cols == 1; }
};

// Reverse-mode tape over the op set the model needs. Forward values are
// computed eagerly at node creation (so builders can branch on values);
// backward() walks nodes in reverse creation order, which is a valid
// topological order because operands always precede their consumers.
//
// Guarded primitives bake their epsilon policy into the derivative:
//   neg_sharpe(m, s) = clamp(-m / max(s, 1e-12), +-1e6), zero grads if clamped
//   safe_div(a, b)   = 0 with zero grads when |b| < 1e-12
class Tape {
    enum class Op : uint8_t {
        leaf, matmul, add, sub, mul, scale, add_rowvec, sub_bcast,
        tanh_, sigmoid_, softplus_, abs_, mean_all, sum_all, sample_std,
        neg_sharpe, safe_div, reshape, slice_rows, concat_rows, select_rows,
        dropout,
    };

    struct Node {
        Op op = Op::leaf;
        int a = -1, b = -1;
        double c0 = 0;
        int i0 = 0, i1 = 0;
        Tensor own;
        Tensor* ext = nullptr;
        bool needs_grad = false;
        std::vector<int> gather;     // select_rows indices
        std::vector<uint8_t> mask;   // dropout keep mask

        Tensor& t() { return ext ? *ext : own; }
        const Tensor& t() const { return ext ? *ext : own; }
    };

  public:
    // External leaf; gradients accumulate into t->g.
    int input(Tensor* t) {
        Node n;
        n.ext = t;
        n.needs_grad = t->requires_grad;
        nodes_.push_back(std::move(n));
        return last();
    }

    int constant(int rows, int cols, const double* data) {
        Node n;
        n.own = Tensor(rows, cols);
        if (data) std::copy(data, data + n.own.numel(), n.own.v.begin());
        nodes_.push_back(std::move(n));
        return last();
    }

    int constant(int rows, int cols, const std::vector<double>& data) {
        if (data.size() != static_cast<size_t>(rows) * cols)
            raise(Errc::shape_mismatch, "constant: data size does not match shape");
        return constant(rows, cols, data.data());
    }

    int constant_scalar(double v) { return constant(1, 1, &v); }

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].t(); }
    Tensor& tensor(int id) { return nodes_[static_cast<size_t>(id)].t(); }
    size_t size() const { return nodes_.size(); }

    int matmul(int a, int b) {
        const Tensor &A = val(a), &B = val(b);
        if (A.cols != B.rows) raise(Errc::shape_mismatch, shape_msg("matmul", A, B));
        Node n = binary(Op::matmul, a, b, A.rows, B.cols);
        Tensor& C = n.own;
        for (int i = 0; i < A.rows; ++i) {
            const double* arow = &A.v[static_cast<size_t>(i) * A.cols];
            double* crow = &C.v[static_cast<size_t>(i) * C.cols];
            for (int l = 0; l < A.cols; ++l) {
                double av = arow[l];
                if (av == 0.0) continue;
                const double* brow = &B.v[static_cast<size_t>(l) * B.cols];
                for (int j = 0; j < B.cols; ++j) crow[j] += av * brow[j];
            }
        }
        return push(std::move(n));
    }

    int add(int a, int b) { return ew(Op::add, a, b); }
    int sub(int a, int b) { return ew(Op::sub, a, b); }
    int mul(int a, int b) { return ew(Op::mul, a, b); }

    int scale(int a, double c) {
        const Tensor& A = val(a);
        Node n = unary(Op::scale, a, A.rows, A.cols);
        n.c0 = c;
        for (size_t i = 0; i < A.numel(); ++i) n.own.v[i] = c * A.v[i];
        return push(std::move(n));
    }

    // M[m x n] + row[1 x n], broadcast down the rows
    int add_rowvec(int a, int b) {
        const Tensor &A = val(a), &B = val(b);
        if (B.rows != 1 || B.cols != A.cols)
            raise(Errc::shape_mismatch, shape_msg("add_rowvec", A, B));
        Node n = binary(Op::add_rowvec, a, b, A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < A.cols; ++j) n.own.at(i, j) = A.at(i, j) + B.at(0, j);
        return push(std::move(n));
    }

    // M - s with s scalar, broadcast everywhere
    int sub_bcast(int a, int s) {
        const Tensor &A = val(a), &S = val(s);
        if (!S.scalar()) raise(Errc::shape_mismatch, shape_msg("sub_bcast", A, S));
        Node n = binary(Op::sub_bcast, a, s, A.rows, A.cols);
        for (size_t i = 0; i < A.numel(); ++i) n.own.v[i] = A.v[i] - S.v[0];
        return push(std::move(n));
    }

    int tanh_(int a) {
        return map(Op::tanh_, a, [](double x) { return std::tanh(x); });
    }
    int sigmoid_(int a) {
        return map(Op::sigmoid_, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    }
    // numerically stable softplus: x for large x, log1p(exp(x)) otherwise
    int softplus_(int a) {
        return map(Op::softplus_, a,
                   [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
    }
    int abs_(int a) {
        return map(Op::abs_, a, [](double x) { return std::abs(x); });
    }

    int mean_all(int a) {
        const Tensor& A = val(a);
        Node n = unary(Op::mean_all, a, 1, 1);
        double s = 0;
        for (double x : A.v) s += x;
        n.own.v[0] = s / static_cast<double>(A.numel());
        return push(std::move(n));
    }

    int sum_all(int a) {
        const Tensor& A = val(a);
        Node n = unary(Op::sum_all, a, 1, 1);
        double s = 0;
        for (double x : A.v) s += x;
        n.own.v[0] = s;
        return push(std::move(n));
    }

    // sample standard deviation (n-1) over all entries; needs >= 2 of them
    int sample_std(int a) {
        const Tensor& A = val(a);
        if (A.numel() < 2) raise(Errc::too_few_observations, "sample_std: needs >= 2 entries");
        Node n = unary(Op::sample_std, a, 1, 1);
        double mean = 0;
        for (double x : A.v) mean += x;
        mean /= static_cast<double>(A.numel());
        double ss = 0;
        for (double x : A.v) ss += (x - mean) * (x - mean);
        n.own.v[0] = std::sqrt(ss / static_cast<double>(A.numel() - 1));
        return push(std::move(n));
    }

    int neg_sharpe(int mean_id, int std_id) {
        const Tensor &M = val(mean_id), &S = val(std_id);
        if (!M.scalar() || !S.scalar())
            raise(Errc::shape_mismatch, shape_msg("neg_sharpe", M, S));
        Node n = binary(Op::neg_sharpe, mean_id, std_id, 1, 1);
        double sp = std::max(S.v[0], 1e-12);
        double raw = -M.v[0] / sp;
        n.own.v[0] = raw > 1e6 ? 1e6 : (raw < -1e6 ? -1e6 : raw);
        return push(std::move(n));
    }

    int safe_div(int a, int b) {
        const Tensor &A = val(a), &B = val(b);
        if (!A.scalar() || !B.scalar()) raise(Errc::shape_mismatch, shape_msg("safe_div", A, B));
        Node n = binary(Op::safe_div, a, b, 1, 1);
        n.own.v[0] = std::abs(B.v[0]) < 1e-12 ? 0.0 : A.v[0] / B.v[0];
        return push(std::move(n));
    }

    // copy-based reshape; gradient copies straight back
    int reshape(int a, int rows, int cols) {
        const Tensor& A = val(a);
        if (static_cast<size_t>(rows) * cols != A.numel())
            raise(Errc::shape_mismatch, "reshape: element count mismatch");
        Node n = unary(Op::reshape, a, rows, cols);
        n.own.v = A.v;
        return push(std::move(n));
    }

    // rows [r0, r1)
    int slice_rows(int a, int r0, int r1) {
        const Tensor& A = val(a);
        if (r0 < 0 || r1 > A.rows || r0 >= r1)
            raise(Errc::shape_mismatch, "slice_rows: bad range [" + std::to_string(r0) + "," +
                                            std::to_string(r1) + ") for " + std::to_string(A.rows) +
                                            " rows");
        Node n = unary(Op::slice_rows, a, r1 - r0, A.cols);
        n.i0 = r0;
        n.i1 = r1;
        std::copy(A.v.begin() + static_cast<size_t>(r0) * A.cols,
                  A.v.begin() + static_cast<size_t>(r1) * A.cols, n.own.v.begin());
        return push(std::move(n));
    }

    int concat_rows(int a, int b) {
        const Tensor &A = val(a), &B = val(b);
        if (A.cols != B.cols) raise(Errc::shape_mismatch, shape_msg("concat_rows", A, B));
        Node n = binary(Op::concat_rows, a, b, A.rows + B.rows, A.cols);
        std::copy(A.v.begin(), A.v.end(), n.own.v.begin());
        std::copy(B.v.begin(), B.v.end(), n.own.v.begin() + A.numel());
        return push(std::move(n));
    }

    int select_rows(int a, const std::vector<int>& rows) {
        const Tensor& A = val(a);
        if (rows.empty()) raise(Errc::shape_mismatch, "select_rows: empty index list");
        for (int r : rows)
            if (r < 0 || r >= A.rows) raise(Errc::shape_mismatch, "select_rows: index out of range");
        Node n = unary(Op::select_rows, a, static_cast<int>(rows.size()), A.cols);
        n.gather = rows;
        for (size_t k = 0; k < rows.size(); ++k)
            std::copy(A.v.begin() + static_cast<size_t>(rows[k]) * A.cols,
                      A.v.begin() + static_cast<size_t>(rows[k] + 1) * A.cols,
                      n.own.v.begin() + k * A.cols);
        return push(std::move(n));
    }

    // Inverted dropout: keep with probability 1-p and scale by 1/(1-p), so
    // evaluation needs no rescaling. With training off (or p == 0) this is a
    // true no-op: the input id is returned and no node is created.
    int dropout(int a, double p, bool training, Rng& rng) {
        if (!(p >= 0.0 && p < 1.0)) raise(Errc::invalid_spec, "dropout: p must be in [0,1)");
        if (!training || p == 0.0) return a;
        const Tensor& A = val(a);
        Node n = unary(Op::dropout, a, A.rows, A.cols);
        n.c0 = p;
        n.mask.resize(A.numel());
        const double inv = 1.0 / (1.0 - p);
        for (size_t i = 0; i < A.numel(); ++i) {
            n.mask[i] = rng.uniform() >= p ? 1 : 0;
            n.own.v[i] = n.mask[i] ? A.v[i] * inv : 0.0;
        }
        return push(std::move(n));
    }

    void backward(int loss_id) {
        if (loss_id < 0 || static_cast<size_t>(loss_id) >= nodes_.size())
            raise(Errc::non_scalar_loss, "backward: bad node id");
        if (!val(loss_id).scalar())
            raise(Errc::non_scalar_loss, "backward: loss must be a 1x1 tensor");
        nodes_[static_cast<size_t>(loss_id)].t().g[0] += 1.0;
        for (int id = loss_id; id >= 0; --id) step_back(nodes_[static_cast<size_t>(id)]);
    }

  private:
    std::vector<Node> nodes_;

    int last() const { return static_cast<int>(nodes_.size()) - 1; }

    int push(Node&& n) {
        nodes_.push_back(std::move(n));
        return last();
    }

    Node unary(Op op, int a, int rows, int cols) {
        Node n;
        n.op = op;
        n.a = a;
        n.own = Tensor(rows, cols);
        n.needs_grad = nodes_[static_cast<size_t>(a)].needs_grad;
        return n;
    }

    Node binary(Op op, int a, int b, int rows, int cols) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.own = Tensor(rows, cols);
        n.needs_grad = nodes_[static_cast<size_t>(a)].needs_grad ||
                       nodes_[static_cast<size_t>(b)].needs_grad;
        return n;
    }

    static std::string shape_msg(const char* op, const Tensor& a, const Tensor& b) {
        return std::string(op) + ": incompatible shapes [" + std::to_string(a.rows) + "x" +
               std::to_string(a.cols) + "] and [" + std::to_string(b.rows) + "x" +
               std::to_string(b.cols) + "]";
    }

    int ew(Op op, int a, int b) {
        const Tensor &A = val(a), &B = val(b);
        if (A.rows != B.rows || A.cols != B.cols)
            raise(Errc::shape_mismatch,
                  shape_msg(op == Op::add ? "add" : op == Op::sub ? "sub" : "mul", A, B));
        Node n = binary(op, a, b, A.rows, A.cols);
        switch (op) {
            case Op::add:
                for (size_t i = 0; i < A.numel(); ++i) n.own.v[i] = A.v[i] + B.v[i];
                break;
            case Op::sub:
                for (size_t i = 0; i < A.numel(); ++i) n.own.v[i] = A.v[i] - B.v[i];
                break;
            default:
                for (size_t i = 0; i < A.numel(); ++i) n.own.v[i] = A.v[i] * B.v[i];
        }
        return push(std::move(n));
    }

    template <typename F>
    int map(Op op, int a, F f) {
        const Tensor& A = val(a);
        Node n = unary(op, a, A.rows, A.cols);
        for (size_t i = 0; i < A.numel(); ++i) n.own.v[i] = f(A.v[i]);
        return push(std::move(n));
    }

    Tensor& nt(int id) { return nodes_[static_cast<size_t>(id)].t(); }

    void step_back(Node& n) {
        if (!n.needs_grad || n.op == Op::leaf) return;
        const Tensor& Y = n.t();
        Tensor& A = nt(n.a);
        const bool ga = nodes_[static_cast<size_t>(n.a)].needs_grad;
        const bool gb = n.b >= 0 && nodes_[static_cast<size_t>(n.b)].needs_grad;

        switch (n.op) {
            case Op::matmul: {
                Tensor& B = nt(n.b);
                if (ga) {  // gA += gY B^T
                    for (int i = 0; i < A.rows; ++i)
                        for (int l = 0; l < A.cols; ++l) {
                            const double* yrow = &Y.g[static_cast<size_t>(i) * Y.cols];
                            const double* brow = &B.v[static_cast<size_t>(l) * B.cols];
                            double acc = 0;
                            for (int j = 0; j < Y.cols; ++j) acc += yrow[j] * brow[j];
                            A.g[static_cast<size_t>(i) * A.cols + l] += acc;
                        }
                }
                if (gb) {  // gB += A^T gY
                    Tensor& Bm = nt(n.b);
                    for (int l = 0; l < A.cols; ++l)
                        for (int i = 0; i < A.rows; ++i) {
                            double av = A.v[static_cast<size_t>(i) * A.cols + l];
                            if (av == 0.0) continue;
                            const double* yrow = &Y.g[static_cast<size_t>(i) * Y.cols];
                            double* brow = &Bm.g[static_cast<size_t>(l) * Bm.cols];
                            for (int j = 0; j < Y.cols; ++j) brow[j] += av * yrow[j];
                        }
                }
                break;
            }
            case Op::add: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += Y.g[i];
                if (gb) {
                    Tensor& B = nt(n.b);
                    for (size_t i = 0; i < Y.numel(); ++i) B.g[i] += Y.g[i];
                }
                break;
            }
            case Op::sub: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += Y.g[i];
                if (gb) {
                    Tensor& B = nt(n.b);
                    for (size_t i = 0; i < Y.numel(); ++i) B.g[i] -= Y.g[i];
                }
                break;
            }
            case Op::mul: {
                Tensor& B = nt(n.b);
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += Y.g[i] * B.v[i];
                if (gb)
                    for (size_t i = 0; i < Y.numel(); ++i) B.g[i] += Y.g[i] * A.v[i];
                break;
            }
            case Op::scale: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += n.c0 * Y.g[i];
                break;
            }
            case Op::add_rowvec: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += Y.g[i];
                if (gb) {
                    Tensor& B = nt(n.b);
                    for (int i = 0; i < Y.rows; ++i)
                        for (int j = 0; j < Y.cols; ++j)
                            B.g[static_cast<size_t>(j)] += Y.g[static_cast<size_t>(i) * Y.cols + j];
                }
                break;
            }
            case Op::sub_bcast: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += Y.g[i];
                if (gb) {
                    Tensor& B = nt(n.b);
                    double acc = 0;
                    for (size_t i = 0; i < Y.numel(); ++i) acc += Y.g[i];
                    B.g[0] -= acc;
                }
                break;
            }
            case Op::tanh_: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i)
                        A.g[i] += Y.g[i] * (1.0 - Y.v[i] * Y.v[i]);
                break;
            }
            case Op::sigmoid_: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i)
                        A.g[i] += Y.g[i] * Y.v[i] * (1.0 - Y.v[i]);
                break;
            }
            case Op::softplus_: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) {
                        double x = A.v[i];
                        double s = x > 30.0 ? 1.0 : 1.0 / (1.0 + std::exp(-x));
                        A.g[i] += Y.g[i] * s;
                    }
                break;
            }
            case Op::abs_: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) {
                        double x = A.v[i];
                        A.g[i] += Y.g[i] * ((x > 0) - (x < 0));
                    }
                break;
            }
            case Op::mean_all: {
                if (ga) {
                    double d = Y.g[0] / static_cast<double>(A.numel());
                    for (size_t i = 0; i < A.numel(); ++i) A.g[i] += d;
                }
                break;
            }
            case Op::sum_all: {
                if (ga)
                    for (size_t i = 0; i < A.numel(); ++i) A.g[i] += Y.g[0];
                break;
            }
            case Op::sample_std: {
                if (ga && Y.v[0] > 1e-300) {
                    double mean = 0;
                    for (double x : A.v) mean += x;
                    mean /= static_cast<double>(A.numel());
                    double d = Y.g[0] / ((static_cast<double>(A.numel()) - 1.0) * Y.v[0]);
                    for (size_t i = 0; i < A.numel(); ++i) A.g[i] += d * (A.v[i] - mean);
                }
                break;
            }
            case Op::neg_sharpe: {
                Tensor& S = nt(n.b);
                double m = A.v[0], s = S.v[0];
                double sp = std::max(s, 1e-12);
                double raw = -m / sp;
                if (std::abs(raw) <= 1e6) {
                    if (ga) A.g[0] += Y.g[0] * (-1.0 / sp);
                    if (gb && s >= 1e-12) S.g[0] += Y.g[0] * (m / (sp * sp));
                }
                break;
            }
            case Op::safe_div: {
                Tensor& B = nt(n.b);
                double bv = B.v[0];
                if (std::abs(bv) >= 1e-12) {
                    if (ga) A.g[0] += Y.g[0] / bv;
                    if (gb) B.g[0] -= Y.g[0] * A.v[0] / (bv * bv);
                }
                break;
            }
            case Op::reshape: {
                if (ga)
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[i] += Y.g[i];
                break;
            }
            case Op::slice_rows: {
                if (ga) {
                    size_t off = static_cast<size_t>(n.i0) * A.cols;
                    for (size_t i = 0; i < Y.numel(); ++i) A.g[off + i] += Y.g[i];
                }
                break;
            }
            case Op::concat_rows: {
                Tensor& B = nt(n.b);
                if (ga)
                    for (size_t i = 0; i < A.numel(); ++i) A.g[i] += Y.g[i];
                if (gb)
                    for (size_t i = 0; i < B.numel(); ++i) B.g[i] += Y.g[A.numel() + i];
                break;
            }
            case Op::select_rows: {
                if (ga)
                    for (size_t k = 0; k < n.gather.size(); ++k) {
                        size_t src = k * static_cast<size_t>(Y.cols);
                        size_t dst = static_cast<size_t>(n.gather[k]) * A.cols;
                        for (int j = 0; j < Y.cols; ++j) A.g[dst + j] += Y.g[src + j];
                    }
                break;
            }
            case Op::dropout: {
                if (ga) {
                    const double inv = 1.0 / (1.0 - n.c0);
                    for (size_t i = 0; i < Y.numel(); ++i)
                        if (n.mask[i]) A.g[i] += Y.g[i] * inv;
                }
                break;
            }
            case Op::leaf:
                break;
        }
    }
};

}  // namespace mtmom::nn
