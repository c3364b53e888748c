#pragma once

#include <cmath>
#include <cstddef>

#include "glimt/rng.hpp"
#include "glimt/tape.hpp"
#include "glimt/tensor.hpp"

namespace glimt {

/// Parameters of one LSTM cell: a fused affine map from [input, hidden] to
/// the four gate pre-activations, laid out in i, f, o, g order.
struct LstmCell {
    Tensor weight;  // (4*hidden) x (input + hidden)
    Tensor bias;    // 4*hidden

    std::size_t hidden() const { return bias.size() / 4; }
    std::size_t input() const { return weight.cols() - hidden(); }
};

/// Uniform fan-in initialization with the forget-gate bias lifted to one so
/// early training does not flush state.
inline LstmCell make_lstm_cell(std::size_t input, std::size_t hidden, Rng& rng) {
    if (input == 0 || hidden == 0) throw invalid_argument("make_lstm_cell: zero dimension");
    const std::size_t fan_in = input + hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    LstmCell cell;
    cell.weight = Tensor({4 * hidden, fan_in});
    for (std::size_t i = 0; i < cell.weight.size(); ++i) {
        cell.weight[i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
    cell.bias = Tensor::zeros({4 * hidden});
    for (std::size_t i = hidden; i < 2 * hidden; ++i) cell.bias[i] = 1.0;
    return cell;
}

struct LstmVars {
    Var weight;
    Var bias;
};

struct LstmState {
    Var h;
    Var c;
};

inline LstmVars register_lstm(Tape& tape, const LstmCell& cell, bool needs_grad = true) {
    return {tape.push(cell.weight, needs_grad, nullptr), tape.push(cell.bias, needs_grad, nullptr)};
}

inline LstmState lstm_initial_state(Tape& tape, std::size_t hidden) {
    return {tape.constant(Tensor::zeros({hidden})), tape.constant(Tensor::zeros({hidden}))};
}

/// One LSTM step as a composite of primitive tape ops.
inline LstmState lstm_step(Tape& tape, const LstmVars& cell, Var x, const LstmState& prev) {
    const std::size_t hidden = tape.value(prev.h).size();
    Var z = tape.affine(cell.weight, tape.concat({x, prev.h}), cell.bias);
    Var gi = tape.sigmoid(tape.slice(z, 0, hidden));
    Var gf = tape.sigmoid(tape.slice(z, hidden, hidden));
    Var go = tape.sigmoid(tape.slice(z, 2 * hidden, hidden));
    Var gg = tape.tanh(tape.slice(z, 3 * hidden, hidden));
    Var c = tape.add(tape.mul(gf, prev.c), tape.mul(gi, gg));
    Var h = tape.mul(go, tape.tanh(c));
    return {h, c};
}

}  // namespace glimt
