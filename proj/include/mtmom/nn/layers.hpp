#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mtmom/nn/tensor.hpp"
#include "mtmom/rng.hpp"

namespace mtmom::nn {

// Weights are drawn U[-1/sqrt(fan_in), +1/sqrt(fan_in)] in serialization
// order so a (seed, architecture) pair pins every parameter bit. Biases are
// zero except the LSTM forget gate, which starts at 1 (the usual trick to
// keep memory open early in training).
inline void init_uniform(Tensor& t, int fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : t.v) x = rng.uniform(-bound, bound);
}

// Gate order everywhere (init, serialization, stacking): input, forget,
// cell candidate, output.
struct LstmCellParams {
    int input_size = 0, hidden_size = 0;
    std::array<Tensor, 4> Wx, Wh, b;

    void build(int in, int hidden) {
        input_size = in;
        hidden_size = hidden;
        for (int k = 0; k < 4; ++k) {
            Wx[k] = Tensor(in, hidden, true);
            Wh[k] = Tensor(hidden, hidden, true);
            b[k] = Tensor(1, hidden, true);
        }
    }

    void init(Rng& rng) {
        for (int k = 0; k < 4; ++k) {
            init_uniform(Wx[k], input_size, rng);
            init_uniform(Wh[k], hidden_size, rng);
            std::fill(b[k].v.begin(), b[k].v.end(), k == 1 ? 1.0 : 0.0);
        }
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        for (int k = 0; k < 4; ++k) {
            out.push_back(&Wx[k]);
            out.push_back(&Wh[k]);
            out.push_back(&b[k]);
        }
        return out;
    }

    long n_params() const {
        return 4L * (static_cast<long>(input_size) * hidden_size +
                     static_cast<long>(hidden_size) * hidden_size + hidden_size);
    }
};

struct LstmCellNodes {
    std::array<int, 4> Wx{}, Wh{}, b{};
};

inline LstmCellNodes put_on_tape(Tape& tape, LstmCellParams& p) {
    LstmCellNodes n;
    for (int k = 0; k < 4; ++k) {
        n.Wx[k] = tape.input(&p.Wx[k]);
        n.Wh[k] = tape.input(&p.Wh[k]);
        n.b[k] = tape.input(&p.b[k]);
    }
    return n;
}

struct LstmState {
    int h = -1, c = -1;  // tape node ids, each [B x hidden]
};

// One step of the standard LSTM cell on a batch x [B x input]:
//   i = sig(x Wxi + h Whi + bi)    f = sig(...)    o = sig(...)
//   g = tanh(x Wxg + h Whg + bg)
//   c' = f*c + i*g                 h' = o * tanh(c')
inline LstmState lstm_step(Tape& t, const LstmCellNodes& n, int x, const LstmState& prev) {
    auto gate = [&](int k) {
        int pre = t.add(t.matmul(x, n.Wx[k]), t.matmul(prev.h, n.Wh[k]));
        return t.add_rowvec(pre, n.b[k]);
    };
    int i = t.sigmoid_(gate(0));
    int f = t.sigmoid_(gate(1));
    int g = t.tanh_(gate(2));
    int o = t.sigmoid_(gate(3));
    LstmState out;
    out.c = t.add(t.mul(f, prev.c), t.mul(i, g));
    out.h = t.mul(o, t.tanh_(out.c));
    return out;
}

enum class Activation { linear, tanh_act, sigmoid_act, softplus_act };

inline int apply_activation(Tape& t, int x, Activation act) {
    switch (act) {
        case Activation::linear: return x;
        case Activation::tanh_act: return t.tanh_(x);
        case Activation::sigmoid_act: return t.sigmoid_(x);
        case Activation::softplus_act: return t.softplus_(x);
    }
    return x;
}

struct FnnLayerParams {
    Tensor W, b;
    Activation act = Activation::linear;
};

// Plain feed-forward stack. Hidden layers use tanh; the head activation is
// whatever the caller wants (tanh for a bounded weight, softplus for a
// positive volatility).
struct FnnParams {
    std::vector<FnnLayerParams> layers;

    void build(int in, int hidden, int n_hidden, int out, Activation hidden_act,
               Activation out_act) {
        layers.clear();
        int cur = in;
        for (int l = 0; l < n_hidden; ++l) {
            FnnLayerParams lp;
            lp.W = Tensor(cur, hidden, true);
            lp.b = Tensor(1, hidden, true);
            lp.act = hidden_act;
            layers.push_back(std::move(lp));
            cur = hidden;
        }
        FnnLayerParams head;
        head.W = Tensor(cur, out, true);
        head.b = Tensor(1, out, true);
        head.act = out_act;
        layers.push_back(std::move(head));
    }

    void init(Rng& rng) {
        for (auto& l : layers) {
            init_uniform(l.W, l.W.rows, rng);
            std::fill(l.b.v.begin(), l.b.v.end(), 0.0);
        }
    }

    std::vector<Tensor*> params() {
        std::vector<Tensor*> out;
        for (auto& l : layers) {
            out.push_back(&l.W);
            out.push_back(&l.b);
        }
        return out;
    }

    long n_params() const {
        long n = 0;
        for (const auto& l : layers) n += l.W.numel() + l.b.numel();
        return n;
    }
};

struct FnnNodes {
    std::vector<std::array<int, 2>> layers;  // {W, b} per layer
};

inline FnnNodes put_on_tape(Tape& tape, FnnParams& p) {
    FnnNodes n;
    for (auto& l : p.layers) n.layers.push_back({tape.input(&l.W), tape.input(&l.b)});
    return n;
}

// Dropout sits after each hidden activation (never after the head).
inline int fnn_forward(Tape& t, const FnnParams& p, const FnnNodes& n, int x, double dropout_p,
                       bool training, Rng& rng) {
    int cur = x;
    for (size_t l = 0; l < p.layers.size(); ++l) {
        cur = t.add_rowvec(t.matmul(cur, n.layers[l][0]), n.layers[l][1]);
        cur = apply_activation(t, cur, p.layers[l].act);
        if (l + 1 < p.layers.size()) cur = t.dropout(cur, dropout_p, training, rng);
    }
    return cur;
}

}  // namespace mtmom::nn
