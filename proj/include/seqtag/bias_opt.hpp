#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "seqtag/decoder.hpp"
#include "seqtag/errors.hpp"
#include "seqtag/eval.hpp"
#include "seqtag/model.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

struct BiasTrainConfig {
  double learning_rate = 0.005;
  // epsilon for each update is drawn uniformly from this grid
  std::vector<double> epsilon_grid = {0.01, 0.02, 0.03, 0.04, 0.05,
                                      0.06, 0.07, 0.08, 0.09, 0.10};
  int max_updates = 200;
  int patience = 50;
  uint64_t seed = 1;
  double bias_floor = 1e-3;  // keeps every coordinate positive

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("bias learning_rate must be > 0");
    if (epsilon_grid.empty()) throw ConfigError("epsilon grid is empty");
    for (double e : epsilon_grid)
      if (e <= 0.0) throw ConfigError("epsilon values must be > 0");
    if (max_updates < 0) throw ConfigError("max_updates must be >= 0");
    if (bias_floor <= 0.0) throw ConfigError("bias_floor must be > 0");
  }
};

// log2(1 - F1/100): 0 at F1 = 0, unbounded below as F1 -> 100. The -inf
// sentinel at exactly 100 signals a perfect decode to the training loop.
inline double f1_loss(double f1_percent) {
  if (f1_percent < 0.0 || f1_percent > 100.0)
    throw NumericError("f1_loss: F1 must lie in [0, 100], got " +
                       std::to_string(f1_percent));
  if (f1_percent == 100.0) return -std::numeric_limits<double>::infinity();
  return std::log2(1.0 - f1_percent / 100.0);
}

// Coordinate-wise central differences over the real-label coordinates of the
// bias (the final two coordinates are the begin/end labels, held at gradient
// zero). The same epsilon serves every coordinate of one call, and the
// quotient divides by the step that was actually applied, so epsilon and
// -epsilon give identical results.
inline Array fd_gradient(const std::function<double(const BiasVector&)>& loss_fn,
                         const BiasVector& b, double epsilon) {
  if (epsilon == 0.0) throw NumericError("fd_gradient: epsilon must be nonzero");
  Array g({b.size()});
  BiasVector probe = b;
  for (int y = 0; y < b.num_real(); ++y) {
    double orig = b.b[y];
    double hi = orig + epsilon;
    double lo = orig - epsilon;
    probe.b[y] = hi;
    double up = loss_fn(probe);
    probe.b[y] = lo;
    double down = loss_fn(probe);
    probe.b[y] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("fd_gradient: non-finite loss at coordinate " +
                         std::to_string(y));
    g[y] = (up - down) / (hi - lo);
  }
  return g;
}

struct BiasTraceEntry {
  int update = 0;
  double epsilon = 0.0;
  Array bias;        // full bias vector after the update
  double dev_f1 = 0.0;
};

struct BiasTrainResult {
  BiasVector best;
  double best_f1 = 0.0;
  double baseline_f1 = 0.0;  // all-ones bias
  std::vector<BiasTraceEntry> trace;
};

// SGD on the F1 loss with finite-difference gradients, starting from the
// all-ones bias. Returns the best-scoring bias seen, never one below the
// all-ones baseline. A perfect decode anywhere stops training with success.
inline BiasTrainResult train_bias_fn(
    const std::function<double(const BiasVector&)>& dev_f1_fn, int num_labels,
    const BiasTrainConfig& config) {
  config.validate();
  BiasTrainResult res;
  BiasVector b = BiasVector::ones(num_labels);
  res.baseline_f1 = dev_f1_fn(b);
  res.best = b;
  res.best_f1 = res.baseline_f1;
  if (res.baseline_f1 >= 100.0) return res;

  bool perfect_seen = false;
  BiasVector perfect_bias = b;
  auto loss_fn = [&](const BiasVector& bias) {
    double f1 = dev_f1_fn(bias);
    if (f1 >= 100.0 && !perfect_seen) {
      perfect_seen = true;
      perfect_bias = bias;
    }
    return f1_loss(f1);
  };

  Rng rng(config.seed);
  int since_best = 0;
  for (int update = 1; update <= config.max_updates; ++update) {
    double eps = config.epsilon_grid[static_cast<size_t>(
        rng.uniform_int(static_cast<int>(config.epsilon_grid.size())))];
    Array g;
    try {
      g = fd_gradient(loss_fn, b, eps);
    } catch (const NumericError&) {
      if (!perfect_seen) throw;
      res.best = perfect_bias;
      res.best_f1 = 100.0;
      return res;
    }
    for (int y = 0; y < b.num_real(); ++y) {
      b.b[y] -= config.learning_rate * g[y];
      if (b.b[y] < config.bias_floor) b.b[y] = config.bias_floor;
    }
    double f1 = dev_f1_fn(b);
    res.trace.push_back({update, eps, b.b, f1});
    if (f1 > res.best_f1) {
      res.best_f1 = f1;
      res.best = b;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (f1 >= 100.0) break;
    if (since_best >= config.patience) break;
  }
  return res;
}

// Dev-set objective for a frozen model: lattices are bias-independent, so
// they are computed once and re-decoded per evaluation.
inline std::function<double(const BiasVector&)> make_dev_objective(
    const TaggerModel& model, const std::vector<Sentence>& dev,
    bool constrain = false, const AuxFeatures* aux = nullptr) {
  if (dev.empty()) throw DataError("bias training: empty dev set");
  long gold_entities = 0;
  auto gold = std::make_shared<std::vector<std::vector<std::string>>>();
  for (const auto& s : dev) {
    if (!s.labeled())
      throw DataError("bias training: dev sentences must carry gold labels");
    gold_entities += static_cast<long>(extract_entities_lenient(s.labels).size());
    gold->push_back(s.labels);
  }
  if (gold_entities == 0)
    throw DataError("bias training: dev set has no gold entities;"
                    " F1 objective undefined");
  Transitions tr = model.transitions();
  if (constrain) tr = constrain_transitions(tr, model.vocab);
  auto lattices = std::make_shared<std::vector<ScoreLattice>>(
      model.lattice_cache(dev, aux));
  std::vector<std::string> label_names = model.vocab.labels;
  return [lattices, gold, tr, label_names](const BiasVector& bias) {
    std::vector<std::vector<std::string>> pred;
    pred.reserve(lattices->size());
    for (const auto& lat : *lattices) {
      auto ids = biased_viterbi(lat, tr, bias).labels;
      std::vector<std::string> ls;
      ls.reserve(ids.size());
      for (int id : ids) ls.push_back(label_names[static_cast<size_t>(id)]);
      pred.push_back(std::move(ls));
    }
    return entity_f1(pred, *gold).f1;
  };
}

inline BiasTrainResult train_bias(const TaggerModel& model,
                                  const std::vector<Sentence>& dev,
                                  const BiasTrainConfig& config,
                                  bool constrain = false,
                                  const AuxFeatures* aux = nullptr) {
  return train_bias_fn(make_dev_objective(model, dev, constrain, aux),
                       model.vocab.num_labels(), config);
}

struct GridSearchResult {
  double best_value = 1.0;
  double best_f1 = 0.0;
  std::vector<std::pair<double, double>> curve;  // (value, dev F1)
};

// Single-label grid search: every other bias stays at 1. Ties prefer the
// value closest to 1.0, then the smaller value.
inline GridSearchResult grid_search_bias_fn(
    const std::function<double(const BiasVector&)>& dev_f1_fn, int num_labels,
    int label, double lo, double hi, double step) {
  if (!(lo < hi) || step <= 0.0)
    throw ConfigError("grid_search_bias: need lo < hi and step > 0");
  if (label < 0 || label >= num_labels - 2)
    throw ConfigError("grid_search_bias: label id " + std::to_string(label) +
                      " is not a real label");
  GridSearchResult res;
  bool first = true;
  for (int i = 0;; ++i) {
    double v = lo + i * step;
    if (v > hi + step / 2) break;
    BiasVector b = BiasVector::ones(num_labels);
    b.b[label] = v;
    b.validate();
    double f1 = dev_f1_fn(b);
    res.curve.emplace_back(v, f1);
    bool take = first || f1 > res.best_f1;
    if (!take && f1 == res.best_f1) {
      double d_new = std::abs(v - 1.0), d_old = std::abs(res.best_value - 1.0);
      take = d_new < d_old || (d_new == d_old && v < res.best_value);
    }
    if (take) {
      res.best_value = v;
      res.best_f1 = f1;
      first = false;
    }
  }
  return res;
}

inline GridSearchResult grid_search_bias(const TaggerModel& model,
                                         const std::vector<Sentence>& dev,
                                         int label, double lo = 0.5,
                                         double hi = 1.5, double step = 0.1,
                                         bool constrain = false,
                                         const AuxFeatures* aux = nullptr) {
  return grid_search_bias_fn(make_dev_objective(model, dev, constrain, aux),
                             model.vocab.num_labels(), label, lo, hi, step);
}

}  // namespace seqtag
