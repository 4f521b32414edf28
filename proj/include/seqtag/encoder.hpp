#pragma once

#include <string>
#include <vector>

#include "seqtag/errors.hpp"
#include "seqtag/rng.hpp"
#include "seqtag/tape.hpp"

namespace seqtag {

struct EncoderConfig {
  int char_emb_dim = 25;
  int char_hidden_dim = 25;
  int word_emb_dim = 100;
  int word_hidden_dim = 100;
  int stack_layers = 3;  // M
  int aux_dim = 0;       // optional per-token auxiliary vectors
  double dropout_rate = 0.0;

  // width of the word feature vector x_k
  int feature_dim() const {
    return 2 * char_hidden_dim + word_emb_dim + aux_dim;
  }
  // width of each biRNN layer output
  int output_dim() const { return 2 * word_hidden_dim; }

  void validate() const {
    if (stack_layers < 1)
      throw ConfigError("stack_layers must be >= 1, got " +
                        std::to_string(stack_layers));
    if (char_emb_dim <= 0 || char_hidden_dim <= 0 || word_emb_dim <= 0 ||
        word_hidden_dim <= 0 || aux_dim < 0)
      throw ConfigError("encoder dimensions must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw ConfigError("dropout_rate must lie in [0, 1)");
  }
};

// A trainable array and its gradient accumulator.
struct Param {
  Array value;
  Array grad;

  explicit Param(Array v = Array()) : value(std::move(v)), grad(value.shape) {}

  void zero_grad() {
    for (double& g : grad.data) g = 0.0;
  }
};

// LSTM with fused gates in the order [input, forget, cell, output].
struct LstmParams {
  Param w;  // 4H x input_dim
  Param u;  // 4H x H
  Param b;  // 4H, zero-initialized
  int input_dim = 0;
  int hidden_dim = 0;

  static LstmParams init(Rng& rng, int input_dim, int hidden_dim) {
    LstmParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.w = Param(init_weight(rng, 4 * hidden_dim, input_dim));
    p.u = Param(init_weight(rng, 4 * hidden_dim, hidden_dim));
    p.b = Param(Array({4 * hidden_dim}));
    return p;
  }
};

// Tape leaves for one LSTM's parameters.
struct LstmLeaves {
  Tape::NodeId w = -1, u = -1, b = -1;
  int hidden = 0;
};

inline LstmLeaves lstm_leaves(Tape& tape, const LstmParams& p) {
  return {tape.leaf(p.w.value), tape.leaf(p.u.value), tape.leaf(p.b.value),
          p.hidden_dim};
}

// One direction over a sequence of input vector nodes; returns the hidden
// state node at every step. Initial hidden and cell states are zero.
inline std::vector<Tape::NodeId> lstm_run(Tape& tape, const LstmLeaves& p,
                                          const std::vector<Tape::NodeId>& xs) {
  if (xs.empty()) throw ShapeError("lstm_run: empty input sequence");
  int H = p.hidden;
  Tape::NodeId h = tape.leaf(Array({H}));
  Tape::NodeId c = tape.leaf(Array({H}));
  std::vector<Tape::NodeId> hs;
  hs.reserve(xs.size());
  for (Tape::NodeId x : xs) {
    Tape::NodeId gates =
        tape.add(tape.add(tape.matvec(p.w, x), tape.matvec(p.u, h)), p.b);
    Tape::NodeId gi = tape.sigmoid(tape.slice(gates, 0, 0, H));
    Tape::NodeId gf = tape.sigmoid(tape.slice(gates, 0, H, H));
    Tape::NodeId gc = tape.tanh(tape.slice(gates, 0, 2 * H, H));
    Tape::NodeId go = tape.sigmoid(tape.slice(gates, 0, 3 * H, H));
    c = tape.add(tape.mul(gf, c), tape.mul(gi, gc));
    h = tape.mul(go, tape.tanh(c));
    hs.push_back(h);
  }
  return hs;
}

// Character feature of one word: the concatenation of the forward RNN's final
// state over c_0..c_m and the backward RNN's final state over c_m..c_0.
inline Tape::NodeId char_birnn(Tape& tape, const LstmLeaves& fwd,
                               const LstmLeaves& bwd, Tape::NodeId char_table,
                               const std::vector<int>& char_ids) {
  if (char_ids.empty()) throw ShapeError("char_birnn: word has no characters");
  Tape::NodeId embedded = tape.gather_rows(char_table, char_ids);
  int m = static_cast<int>(char_ids.size());
  std::vector<Tape::NodeId> steps, rsteps;
  for (int t = 0; t < m; ++t) steps.push_back(tape.row(embedded, t));
  for (int t = m - 1; t >= 0; --t) rsteps.push_back(steps[t]);
  Tape::NodeId f_last = lstm_run(tape, fwd, steps).back();
  Tape::NodeId b_last = lstm_run(tape, bwd, rsteps).back();
  return tape.concat({f_last, b_last}, 0);
}

// One bidirectional layer: per-position concat of forward and backward
// hidden states.
inline std::vector<Tape::NodeId> birnn_layer(Tape& tape, const LstmLeaves& fwd,
                                             const LstmLeaves& bwd,
                                             const std::vector<Tape::NodeId>& xs) {
  std::vector<Tape::NodeId> rev(xs.rbegin(), xs.rend());
  auto f = lstm_run(tape, fwd, xs);
  auto b = lstm_run(tape, bwd, rev);
  std::vector<Tape::NodeId> out;
  out.reserve(xs.size());
  for (size_t t = 0; t < xs.size(); ++t)
    out.push_back(tape.concat({f[t], b[xs.size() - 1 - t]}, 0));
  return out;
}

struct StackedEncodeResult {
  std::vector<Tape::NodeId> h;       // final layer, one node per position
  std::vector<int> layer_input_dims; // what each layer consumed
};

// Stacked residual biRNN: layer 0 reads x directly; every later layer reads
// the concat [h^(m-1)_k, x_k], so the raw input stays visible all the way up.
// No concat after the final layer.
inline StackedEncodeResult stacked_residual_encode(
    Tape& tape, const std::vector<LstmLeaves>& fwd,
    const std::vector<LstmLeaves>& bwd, const std::vector<Tape::NodeId>& xs) {
  if (fwd.empty() || fwd.size() != bwd.size())
    throw ShapeError("stacked_residual_encode: bad layer count");
  StackedEncodeResult res;
  std::vector<Tape::NodeId> cur = xs;
  for (size_t m = 0; m < fwd.size(); ++m) {
    if (m > 0) {
      std::vector<Tape::NodeId> with_residual;
      with_residual.reserve(cur.size());
      for (size_t k = 0; k < cur.size(); ++k)
        with_residual.push_back(tape.concat({cur[k], xs[k]}, 0));
      cur = std::move(with_residual);
    }
    res.layer_input_dims.push_back(tape.value(cur[0]).size());
    cur = birnn_layer(tape, fwd[m], bwd[m], cur);
  }
  res.h = std::move(cur);
  return res;
}

}  // namespace seqtag
