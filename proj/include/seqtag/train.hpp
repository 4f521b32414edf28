#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "seqtag/eval.hpp"
#include "seqtag/model.hpp"

namespace seqtag {

struct TrainConfig {
  double learning_rate = 0.005;
  double momentum = 0.9;
  double clip_norm = 5.0;
  int epochs = 100;
  int batch_size = 1;  // gradients are averaged over the batch
  int patience = 10;   // epochs without a dev improvement
  double dropout = 0.0;
  uint64_t seed = 1;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("momentum must lie in [0, 1)");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
  }
};

// Scales all gradients so the global norm is at most clip_norm; returns the
// pre-clip norm.
inline double clip_gradients(ModelParams& params, double clip_norm) {
  double sq = 0.0;
  for_each_param(params, [&](const std::string&, Param& p) {
    for (double g : p.grad.data) sq += g * g;
  });
  double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    double scale = clip_norm / norm;
    for_each_param(params, [&](const std::string&, Param& p) {
      for (double& g : p.grad.data) g *= scale;
    });
  }
  return norm;
}

// Classic momentum: v <- mu * v - lr * g; p <- p + v. With mu = 0 this is
// plain SGD.
class SgdMomentum {
 public:
  SgdMomentum(double learning_rate, double momentum)
      : lr_(learning_rate), mu_(momentum) {}

  void step(ModelParams& params) {
    size_t i = 0;
    for_each_param(params, [&](const std::string&, Param& p) {
      if (i == velocity_.size()) velocity_.emplace_back(p.value.shape);
      Array& v = velocity_[i++];
      for (int k = 0; k < p.value.size(); ++k) {
        v[k] = mu_ * v[k] - lr_ * p.grad[k];
        p.value[k] += v[k];
      }
    });
  }

 private:
  double lr_, mu_;
  std::vector<Array> velocity_;
};

struct EpochStats {
  int epoch = 0;
  double avg_loss = 0.0;
  double dev_f1 = 0.0;
  bool is_best = false;
};

struct TrainResult {
  TaggerModel model;  // state of the best-dev checkpoint
  double best_dev_f1 = 0.0;
  int best_epoch = 0;  // 0 means the initialized model
  std::vector<EpochStats> trace;
};

inline double evaluate_dev(const TaggerModel& model,
                           const std::vector<Sentence>& dev,
                           const AuxFeatures* aux) {
  std::vector<std::vector<std::string>> gold;
  for (const auto& s : dev) {
    if (!s.labeled()) throw DataError("dev sentences must carry gold labels");
    gold.push_back(s.labels);
  }
  return entity_f1(model.decode_dataset(dev, nullptr, false, aux), gold).f1;
}

// SGD with momentum over the CRF negative log-likelihood; seeded sentence
// shuffling per epoch, per-epoch dev evaluation, best-dev model retained.
inline TrainResult train(TaggerModel model,
                         const std::vector<Sentence>& train_set,
                         const std::vector<Sentence>& dev_set,
                         const TrainConfig& config, std::ostream* log = nullptr,
                         const AuxFeatures* train_aux = nullptr,
                         const AuxFeatures* dev_aux = nullptr) {
  config.validate();
  if (train_set.empty() || dev_set.empty())
    throw DataError("train: empty train or dev set");
  model.config.dropout_rate = config.dropout;

  std::vector<std::vector<int>> gold;
  gold.reserve(train_set.size());
  for (const auto& s : train_set) {
    if (!s.labeled()) throw DataError("train sentences must carry gold labels");
    gold.push_back(model.vocab.label_id_seq(s));
  }

  TrainResult res;
  res.best_dev_f1 = evaluate_dev(model, dev_set, dev_aux);
  res.best_epoch = 0;
  res.model = model;

  Rng shuffle_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x5eedd20ffull);
  SgdMomentum opt(config.learning_rate, config.momentum);
  std::vector<int> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  char line[160];
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    int in_batch = 0;
    model.zero_grads();
    for (size_t step = 0; step < order.size(); ++step) {
      int idx = order[step];
      const Array* aux =
          train_aux ? &train_aux->per_sentence[static_cast<size_t>(idx)] : nullptr;
      double loss = model.loss_and_grads(train_set[static_cast<size_t>(idx)],
                                         gold[static_cast<size_t>(idx)],
                                         &dropout_rng, aux);
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", sentence " + std::to_string(idx));
      loss_sum += loss;
      ++in_batch;
      if (in_batch == config.batch_size || step + 1 == order.size()) {
        if (in_batch > 1) {
          for_each_param(model.params, [&](const std::string&, Param& p) {
            for (double& g : p.grad.data) g /= in_batch;
          });
        }
        clip_gradients(model.params, config.clip_norm);
        opt.step(model.params);
        model.zero_grads();
        in_batch = 0;
      }
    }
    EpochStats st;
    st.epoch = epoch;
    st.avg_loss = loss_sum / static_cast<double>(train_set.size());
    st.dev_f1 = evaluate_dev(model, dev_set, dev_aux);
    st.is_best = st.dev_f1 > res.best_dev_f1;
    if (st.is_best) {
      res.best_dev_f1 = st.dev_f1;
      res.best_epoch = epoch;
      res.model = model;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.trace.push_back(st);
    if (log) {
      std::snprintf(line, sizeof(line),
                    "epoch %d loss %.6f dev_f1 %.2f%s\n", epoch, st.avg_loss,
                    st.dev_f1, st.is_best ? " *" : "");
      (*log) << line;
    }
    if (since_best >= config.patience) break;
  }
  return res;
}

}  // namespace seqtag
