#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "seqtag/corpus.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

struct TypeCounts {
  long gold = 0;
  long predicted = 0;
  long correct = 0;
};

struct EvalReport {
  long gold_entities = 0;
  long predicted_entities = 0;
  long correct_entities = 0;
  long tokens = 0;
  long correct_tokens = 0;
  double precision = 0.0;  // percentages
  double recall = 0.0;
  double f1 = 0.0;
  double token_accuracy = 0.0;
  std::map<std::string, TypeCounts> per_type;
};

namespace detail {

inline double pct(long num, long den) {
  return den > 0 ? 100.0 * static_cast<double>(num) / static_cast<double>(den)
                 : 0.0;
}

inline double f1_from(double p, double r) {
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

// Entity counts of one sentence pair, with exact span+type matching.
struct SentenceCounts {
  long gold = 0;
  long predicted = 0;
  long correct = 0;
};

inline SentenceCounts count_sentence(const std::vector<EntitySpan>& pred,
                                     const std::vector<EntitySpan>& gold) {
  SentenceCounts c;
  c.gold = static_cast<long>(gold.size());
  c.predicted = static_cast<long>(pred.size());
  size_t i = 0, j = 0;  // both span lists are ordered by start
  while (i < pred.size() && j < gold.size()) {
    if (pred[i] == gold[j]) {
      ++c.correct;
      ++i;
      ++j;
    } else if (pred[i] < gold[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return c;
}

}  // namespace detail

// Entity-level precision/recall/F1 with exact span-and-type matching, plus
// token accuracy. Both sides are read leniently (orphan continuations start
// an entity), so raw model output needs no prior repair.
inline EvalReport entity_f1(const std::vector<std::vector<std::string>>& pred,
                            const std::vector<std::vector<std::string>>& gold,
                            Scheme scheme = Scheme::BIO) {
  (void)scheme;  // the lenient reading is scheme-agnostic over B/I/E/S/O tags
  if (pred.size() != gold.size())
    throw DataError("entity_f1: " + std::to_string(pred.size()) +
                    " predicted sentences vs " + std::to_string(gold.size()) +
                    " gold");
  EvalReport rep;
  for (size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gold[s].size())
      throw DataError("entity_f1: sentence " + std::to_string(s) +
                      " length mismatch: " + std::to_string(pred[s].size()) +
                      " vs " + std::to_string(gold[s].size()));
    rep.tokens += static_cast<long>(gold[s].size());
    for (size_t t = 0; t < gold[s].size(); ++t)
      if (pred[s][t] == gold[s][t]) ++rep.correct_tokens;
    auto p_spans = extract_entities_lenient(pred[s]);
    auto g_spans = extract_entities_lenient(gold[s]);
    auto c = detail::count_sentence(p_spans, g_spans);
    rep.gold_entities += c.gold;
    rep.predicted_entities += c.predicted;
    rep.correct_entities += c.correct;
    for (const auto& sp : g_spans) ++rep.per_type[sp.type].gold;
    for (const auto& sp : p_spans) ++rep.per_type[sp.type].predicted;
    size_t i = 0, j = 0;
    while (i < p_spans.size() && j < g_spans.size()) {
      if (p_spans[i] == g_spans[j]) {
        ++rep.per_type[p_spans[i].type].correct;
        ++i;
        ++j;
      } else if (p_spans[i] < g_spans[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }
  rep.precision = detail::pct(rep.correct_entities, rep.predicted_entities);
  rep.recall = detail::pct(rep.correct_entities, rep.gold_entities);
  rep.f1 = detail::f1_from(rep.precision, rep.recall);
  rep.token_accuracy = detail::pct(rep.correct_tokens, rep.tokens);
  return rep;
}

// conlleval-style text block followed by one machine-readable line.
inline std::string format_report(const EvalReport& rep) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf),
                "processed %ld tokens with %ld phrases; found: %ld phrases;"
                " correct: %ld.\n",
                rep.tokens, rep.gold_entities, rep.predicted_entities,
                rep.correct_entities);
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "accuracy: %6.2f%%; precision: %6.2f%%; recall: %6.2f%%;"
                " FB1: %6.2f\n",
                rep.token_accuracy, rep.precision, rep.recall, rep.f1);
  out += buf;
  for (const auto& [type, c] : rep.per_type) {
    double p = detail::pct(c.correct, c.predicted);
    double r = detail::pct(c.correct, c.gold);
    std::snprintf(buf, sizeof(buf),
                  "%17s: precision: %6.2f%%; recall: %6.2f%%; FB1: %6.2f  %ld\n",
                  type.c_str(), p, r, detail::f1_from(p, r), c.predicted);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "RESULT tokens: %ld gold: %ld predicted: %ld correct: %ld"
                " accuracy: %.2f precision: %.2f recall: %.2f f1: %.2f\n",
                rep.tokens, rep.gold_entities, rep.predicted_entities,
                rep.correct_entities, rep.token_accuracy, rep.precision,
                rep.recall, rep.f1);
  out += buf;
  return out;
}

namespace detail {

inline double f1_of_counts(long correct, long predicted, long gold) {
  double p = pct(correct, predicted);
  double r = pct(correct, gold);
  return f1_from(p, r);
}

}  // namespace detail

// Approximate-randomization paired test on corpus-level entity F1. Each
// iteration swaps the two systems' outputs on every sentence independently
// with probability 1/2; the p-value is add-one smoothed:
// (count(|dF1_shuffled| >= |dF1_observed|) + 1) / (iterations + 1).
inline double randomization_test(
    const std::vector<std::vector<std::string>>& pred_a,
    const std::vector<std::vector<std::string>>& pred_b,
    const std::vector<std::vector<std::string>>& gold, int iterations,
    uint64_t seed) {
  if (pred_a.size() != gold.size() || pred_b.size() != gold.size())
    throw DataError("randomization_test: misaligned system outputs");
  if (iterations < 1)
    throw ConfigError("randomization_test: iterations must be >= 1");
  size_t n = gold.size();
  std::vector<detail::SentenceCounts> ca(n), cb(n);
  long gold_total = 0;
  for (size_t s = 0; s < n; ++s) {
    if (pred_a[s].size() != gold[s].size() || pred_b[s].size() != gold[s].size())
      throw DataError("randomization_test: sentence " + std::to_string(s) +
                      " length mismatch");
    auto g_spans = extract_entities_lenient(gold[s]);
    ca[s] = detail::count_sentence(extract_entities_lenient(pred_a[s]), g_spans);
    cb[s] = detail::count_sentence(extract_entities_lenient(pred_b[s]), g_spans);
    gold_total += static_cast<long>(g_spans.size());
  }
  auto diff = [&](const std::vector<bool>& swap_mask) {
    long corr_a = 0, pred_a_n = 0, corr_b = 0, pred_b_n = 0;
    for (size_t s = 0; s < n; ++s) {
      const auto& first = swap_mask[s] ? cb[s] : ca[s];
      const auto& second = swap_mask[s] ? ca[s] : cb[s];
      corr_a += first.correct;
      pred_a_n += first.predicted;
      corr_b += second.correct;
      pred_b_n += second.predicted;
    }
    return std::abs(detail::f1_of_counts(corr_a, pred_a_n, gold_total) -
                    detail::f1_of_counts(corr_b, pred_b_n, gold_total));
  };
  std::vector<bool> mask(n, false);
  double observed = diff(mask);
  Rng rng(seed);
  long hits = 0;
  for (int it = 0; it < iterations; ++it) {
    for (size_t s = 0; s < n; ++s) mask[s] = rng.uniform() < 0.5;
    if (diff(mask) >= observed) ++hits;
  }
  return static_cast<double>(hits + 1) / (iterations + 1);
}

}  // namespace seqtag
