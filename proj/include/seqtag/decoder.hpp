#pragma once

#include <string>
#include <vector>

#include "seqtag/crf.hpp"
#include "seqtag/errors.hpp"

namespace seqtag {

// Per-label multiplicative decode biases over the full label set; the
// begin/end entries are fixed at 1 and a value of 1.0 means no bias.
struct BiasVector {
  Array b;

  static BiasVector ones(int num_labels) {
    BiasVector v;
    v.b = Array::full({num_labels}, 1.0);
    return v;
  }

  int size() const { return b.size(); }
  int num_real() const { return b.size() - 2; }

  void validate() const {
    for (int i = 0; i < b.size(); ++i)
      if (!(b[i] > 0.0))
        throw NumericError("bias entry " + std::to_string(i) +
                           " must be positive, got " + std::to_string(b[i]));
  }
};

struct DecodeResult {
  std::vector<int> labels;
  double score = 0.0;
};

// Max-product Viterbi over the begin/end-augmented chain. Ties at every
// argmax break toward the lowest label id; equivalently, among all optimal
// paths the one whose labels compare smallest read from the sequence end.
inline DecodeResult viterbi(const ScoreLattice& lattice,
                            const Transitions& trans) {
  detail::check_instance(lattice, trans);
  int n = lattice.length(), r = trans.num_real;
  std::vector<double> best(static_cast<size_t>(n) * r);
  std::vector<int> back(static_cast<size_t>(n) * r, -1);
  for (int y = 0; y < r; ++y)
    best[y] = trans.score(trans.begin_label(), y) + lattice.score(0, y);
  for (int t = 1; t < n; ++t)
    for (int y = 0; y < r; ++y) {
      double bv = best[static_cast<size_t>(t - 1) * r] + trans.score(0, y);
      int bp = 0;
      for (int p = 1; p < r; ++p) {
        double s = best[static_cast<size_t>(t - 1) * r + p] + trans.score(p, y);
        if (s > bv) {
          bv = s;
          bp = p;
        }
      }
      best[static_cast<size_t>(t) * r + y] = bv + lattice.score(t, y);
      back[static_cast<size_t>(t) * r + y] = bp;
    }
  DecodeResult res;
  double final_best = best[static_cast<size_t>(n - 1) * r] +
                      trans.score(0, trans.end_label());
  int final_label = 0;
  for (int y = 1; y < r; ++y) {
    double s = best[static_cast<size_t>(n - 1) * r + y] +
               trans.score(y, trans.end_label());
    if (s > final_best) {
      final_best = s;
      final_label = y;
    }
  }
  res.score = final_best;
  res.labels.assign(static_cast<size_t>(n), 0);
  res.labels[static_cast<size_t>(n - 1)] = final_label;
  for (int t = n - 1; t > 0; --t)
    res.labels[static_cast<size_t>(t - 1)] =
        back[static_cast<size_t>(t) * r + res.labels[static_cast<size_t>(t)]];
  return res;
}

// The bias multiplies observation scores only; transitions are untouched.
inline ScoreLattice scale_rows(const ScoreLattice& lattice,
                               const BiasVector& bias) {
  if (bias.size() != lattice.label_count())
    throw ShapeError("scale_rows: bias length " + std::to_string(bias.size()) +
                     " vs " + std::to_string(lattice.label_count()) +
                     " labels");
  ScoreLattice out = lattice;
  for (int t = 0; t < lattice.length(); ++t)
    for (int y = 0; y < lattice.label_count(); ++y)
      out.lambda(t, y) = bias.b[y] * lattice.score(t, y);
  return out;
}

inline DecodeResult biased_viterbi(const ScoreLattice& lattice,
                                   const Transitions& trans,
                                   const BiasVector& bias) {
  bias.validate();
  return viterbi(scale_rows(lattice, bias), trans);
}

}  // namespace seqtag
