#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "seqtag/array.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/errors.hpp"
#include "seqtag/tape.hpp"

namespace seqtag {

// Forbidden-transition sentinel: large enough that exp(k - anything real)
// underflows to zero in the partition sum, small enough to stay NaN-free in
// logsumexp arithmetic.
inline constexpr double kForbidden = -1e4;

// Transition score matrix over the full label set (real labels first, then
// the sequence-begin and sequence-end labels). The begin label is never a
// transition target and the end label never a source; those entries hold the
// sentinel and are never read by the recursions.
struct Transitions {
  Array delta;   // l x l, rows = from, cols = to
  int num_real = 0;

  int num_labels() const { return num_real + 2; }
  int begin_label() const { return num_real; }
  int end_label() const { return num_real + 1; }

  double score(int from, int to) const { return delta(from, to); }

  static Transitions make(int num_real) {
    Transitions t;
    t.num_real = num_real;
    int l = num_real + 2;
    t.delta = Array({l, l});
    for (int i = 0; i < l; ++i) {
      t.delta(i, t.begin_label()) = kForbidden;   // nothing enters begin
      t.delta(t.end_label(), i) = kForbidden;     // nothing leaves end
    }
    t.delta(t.begin_label(), t.end_label()) = kForbidden;
    return t;
  }

  static Transitions wrap(Array delta) {
    Transitions t;
    t.num_real = delta.rows() - 2;
    t.delta = std::move(delta);
    return t;
  }
};

// Observation scores for one sentence: n x l, columns over the full label
// set. The begin/end columns carry no score contribution and are never read.
struct ScoreLattice {
  Array lambda;  // n x l

  int length() const { return lambda.rows(); }
  int label_count() const { return lambda.cols(); }
  double score(int pos, int label) const { return lambda(pos, label); }
};

// lambda_i = W_p h_i + b_p, applied per position.
inline ScoreLattice project(const Array& h, const Array& wp, const Array& bp) {
  if (h.ndim() != 2 || wp.ndim() != 2 || bp.ndim() != 1 ||
      wp.cols() != h.cols() || bp.size() != wp.rows())
    throw ShapeError("project: incompatible shapes h" + h.shape_string() +
                     " W" + wp.shape_string() + " b" + bp.shape_string());
  int n = h.rows(), l = wp.rows(), d = h.cols();
  ScoreLattice out;
  out.lambda = Array({n, l});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < l; ++y) {
      double s = bp[y];
      for (int k = 0; k < d; ++k) s += wp(y, k) * h(i, k);
      out.lambda(i, y) = s;
    }
  return out;
}

namespace detail {

inline void check_instance(const ScoreLattice& lattice, const Transitions& trans) {
  if (lattice.length() < 1)
    throw ShapeError("crf: empty lattice");
  if (lattice.label_count() != trans.num_labels())
    throw ShapeError("crf: lattice has " +
                     std::to_string(lattice.label_count()) +
                     " label columns but transitions cover " +
                     std::to_string(trans.num_labels()));
  if (trans.num_real < 1) throw ShapeError("crf: no real labels");
}

}  // namespace detail

// Score of one augmented sequence: begin -> Y[0..n-1] -> end. Accumulation
// order is fixed (transition into position, then its observation) and matches
// the Viterbi recursion, so path scores agree bit-for-bit.
inline double score_sequence(const ScoreLattice& lattice,
                             const Transitions& trans,
                             const std::vector<int>& y) {
  detail::check_instance(lattice, trans);
  int n = lattice.length();
  if (static_cast<int>(y.size()) != n)
    throw ShapeError("score_sequence: sequence length " +
                     std::to_string(y.size()) + " vs lattice length " +
                     std::to_string(n));
  for (int id : y)
    if (id < 0 || id >= trans.num_real)
      throw DataError("score_sequence: invalid label id " + std::to_string(id));
  double s = trans.score(trans.begin_label(), y[0]) + lattice.score(0, y[0]);
  for (int t = 1; t < n; ++t)
    s = (s + trans.score(y[t - 1], y[t])) + lattice.score(t, y[t]);
  return s + trans.score(y[n - 1], trans.end_label());
}

// log sum over all real-label sequences of exp(score), by the forward
// recursion in log space.
inline double log_partition(const ScoreLattice& lattice,
                            const Transitions& trans) {
  detail::check_instance(lattice, trans);
  int n = lattice.length(), r = trans.num_real;
  std::vector<double> alpha(r), next(r), tmp(r);
  for (int y = 0; y < r; ++y)
    alpha[y] = trans.score(trans.begin_label(), y) + lattice.score(0, y);
  for (int t = 1; t < n; ++t) {
    for (int y = 0; y < r; ++y) {
      for (int p = 0; p < r; ++p) tmp[p] = alpha[p] + trans.score(p, y);
      next[y] = Tape::logsumexp_raw(tmp.data(), r, 1) + lattice.score(t, y);
    }
    alpha.swap(next);
  }
  for (int y = 0; y < r; ++y)
    tmp[y] = alpha[y] + trans.score(y, trans.end_label());
  return Tape::logsumexp_raw(tmp.data(), r, 1);
}

namespace detail {

struct ForwardBackward {
  std::vector<double> alpha;  // n*r
  std::vector<double> beta;   // n*r
  double log_z = 0.0;
  int n = 0, r = 0;
  double a(int t, int y) const { return alpha[static_cast<size_t>(t) * r + y]; }
  double b(int t, int y) const { return beta[static_cast<size_t>(t) * r + y]; }
};

inline ForwardBackward forward_backward(const ScoreLattice& lattice,
                                        const Transitions& trans) {
  check_instance(lattice, trans);
  ForwardBackward fb;
  fb.n = lattice.length();
  fb.r = trans.num_real;
  int n = fb.n, r = fb.r;
  fb.alpha.resize(static_cast<size_t>(n) * r);
  fb.beta.resize(static_cast<size_t>(n) * r);
  std::vector<double> tmp(r);
  for (int y = 0; y < r; ++y)
    fb.alpha[y] = trans.score(trans.begin_label(), y) + lattice.score(0, y);
  for (int t = 1; t < n; ++t)
    for (int y = 0; y < r; ++y) {
      for (int p = 0; p < r; ++p)
        tmp[p] = fb.a(t - 1, p) + trans.score(p, y);
      fb.alpha[static_cast<size_t>(t) * r + y] =
          Tape::logsumexp_raw(tmp.data(), r, 1) + lattice.score(t, y);
    }
  for (int y = 0; y < r; ++y)
    fb.beta[static_cast<size_t>(n - 1) * r + y] =
        trans.score(y, trans.end_label());
  for (int t = n - 2; t >= 0; --t)
    for (int y = 0; y < r; ++y) {
      for (int q = 0; q < r; ++q)
        tmp[q] = trans.score(y, q) + lattice.score(t + 1, q) + fb.b(t + 1, q);
      fb.beta[static_cast<size_t>(t) * r + y] =
          Tape::logsumexp_raw(tmp.data(), r, 1);
    }
  for (int y = 0; y < r; ++y)
    tmp[y] = fb.a(n - 1, y) + trans.score(y, trans.end_label());
  fb.log_z = Tape::logsumexp_raw(tmp.data(), r, 1);
  return fb;
}

}  // namespace detail

// Per-position label probabilities (n x l; begin/end columns are zero).
inline Array marginals(const ScoreLattice& lattice, const Transitions& trans) {
  auto fb = detail::forward_backward(lattice, trans);
  Array m({fb.n, trans.num_labels()});
  for (int t = 0; t < fb.n; ++t)
    for (int y = 0; y < fb.r; ++y)
      m(t, y) = std::exp(fb.a(t, y) + fb.b(t, y) - fb.log_z);
  return m;
}

struct CrfResult {
  double loss = 0.0;      // log_partition - score(gold) = -log Pr(gold)
  Array dlambda;          // n x l
  Array ddelta;           // l x l; forbidden entries stay zero
};

// Negative log-likelihood with analytic gradients from forward-backward.
// d loss / d lambda = marginal - gold indicator; d loss / d delta likewise
// over pairwise marginals (including the begin row and end column).
inline CrfResult nll_loss(const ScoreLattice& lattice, const Transitions& trans,
                          const std::vector<int>& gold) {
  auto fb = detail::forward_backward(lattice, trans);
  int n = fb.n, r = fb.r, l = trans.num_labels();
  for (int id : gold)
    if (id < 0 || id >= r)
      throw DataError("nll_loss: invalid gold label id " + std::to_string(id));

  CrfResult res;
  res.loss = fb.log_z - score_sequence(lattice, trans, gold);
  res.dlambda = Array({n, l});
  res.ddelta = Array({l, l});

  for (int t = 0; t < n; ++t)
    for (int y = 0; y < r; ++y)
      res.dlambda(t, y) = std::exp(fb.a(t, y) + fb.b(t, y) - fb.log_z) -
                          (gold[t] == y ? 1.0 : 0.0);

  // begin -> first label
  for (int y = 0; y < r; ++y)
    res.ddelta(trans.begin_label(), y) =
        std::exp(fb.a(0, y) + fb.b(0, y) - fb.log_z) -
        (gold[0] == y ? 1.0 : 0.0);
  // pairwise real transitions
  for (int t = 0; t + 1 < n; ++t)
    for (int p = 0; p < r; ++p)
      for (int q = 0; q < r; ++q) {
        double prob = std::exp(fb.a(t, p) + trans.score(p, q) +
                               lattice.score(t + 1, q) + fb.b(t + 1, q) -
                               fb.log_z);
        res.ddelta(p, q) += prob - ((gold[t] == p && gold[t + 1] == q) ? 1.0 : 0.0);
      }
  // last label -> end
  for (int y = 0; y < r; ++y)
    res.ddelta(y, trans.end_label()) +=
        std::exp(fb.a(n - 1, y) + fb.b(n - 1, y) - fb.log_z) -
        (gold[n - 1] == y ? 1.0 : 0.0);
  return res;
}

// Hard scheme-consistency constraints applied on top of the learned
// transitions: forbidden label bigrams get the sentinel. Optional at decode
// time, off by default.
inline Transitions constrain_transitions(const Transitions& trans,
                                         const Vocabulary& vocab) {
  Transitions out = trans;
  int r = trans.num_real;
  auto parts = [&](int id) { return detail::split_label(vocab.labels[id]); };
  auto start_ok = [&](detail::LabelParts p) {
    switch (vocab.scheme) {
      case Scheme::BIO: return p.tag != 'I';
      case Scheme::IOB1: return p.tag != 'B';
      case Scheme::IOBES: return p.tag == 'O' || p.tag == 'B' || p.tag == 'S';
    }
    return true;
  };
  auto end_ok = [&](detail::LabelParts p) {
    if (vocab.scheme == Scheme::IOBES)
      return p.tag == 'O' || p.tag == 'E' || p.tag == 'S';
    return true;
  };
  auto pair_ok = [&](detail::LabelParts a, detail::LabelParts b) {
    switch (vocab.scheme) {
      case Scheme::BIO:
        if (b.tag == 'I') return (a.tag == 'B' || a.tag == 'I') && a.type == b.type;
        return true;
      case Scheme::IOB1:
        if (b.tag == 'B') return (a.tag == 'B' || a.tag == 'I') && a.type == b.type;
        return true;
      case Scheme::IOBES: {
        bool a_open = a.tag == 'B' || a.tag == 'I';
        if (a_open) return (b.tag == 'I' || b.tag == 'E') && a.type == b.type;
        return b.tag == 'O' || b.tag == 'B' || b.tag == 'S';
      }
    }
    return true;
  };
  for (int y = 0; y < r; ++y) {
    if (!start_ok(parts(y))) out.delta(trans.begin_label(), y) = kForbidden;
    if (!end_ok(parts(y))) out.delta(y, trans.end_label()) = kForbidden;
    for (int q = 0; q < r; ++q)
      if (!pair_ok(parts(y), parts(q))) out.delta(y, q) = kForbidden;
  }
  return out;
}

}  // namespace seqtag
