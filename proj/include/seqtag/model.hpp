#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqtag/corpus.hpp"
#include "seqtag/crf.hpp"
#include "seqtag/decoder.hpp"
#include "seqtag/encoder.hpp"

namespace seqtag {

// All trainable arrays of the tagger.
struct ModelParams {
  Param word_emb;  // |Vw| x word_emb_dim
  Param char_emb;  // |Vc| x char_emb_dim
  LstmParams char_fwd, char_bwd;
  std::vector<LstmParams> word_fwd, word_bwd;  // one per stacked layer
  Param proj_w;  // l x 2*word_hidden_dim
  Param proj_b;  // l
  Param delta;   // l x l transitions, forbidden entries at the sentinel
};

// Fixed visit order; the checkpoint layout and all flattened-parameter
// operations depend on it.
template <typename Fn>
void for_each_param(ModelParams& p, Fn&& fn) {
  fn("word_emb", p.word_emb);
  fn("char_emb", p.char_emb);
  fn("char_fwd.w", p.char_fwd.w);
  fn("char_fwd.u", p.char_fwd.u);
  fn("char_fwd.b", p.char_fwd.b);
  fn("char_bwd.w", p.char_bwd.w);
  fn("char_bwd.u", p.char_bwd.u);
  fn("char_bwd.b", p.char_bwd.b);
  for (size_t m = 0; m < p.word_fwd.size(); ++m) {
    std::string tag = "word[" + std::to_string(m) + "]";
    fn(tag + ".fwd.w", p.word_fwd[m].w);
    fn(tag + ".fwd.u", p.word_fwd[m].u);
    fn(tag + ".fwd.b", p.word_fwd[m].b);
    fn(tag + ".bwd.w", p.word_bwd[m].w);
    fn(tag + ".bwd.u", p.word_bwd[m].u);
    fn(tag + ".bwd.b", p.word_bwd[m].b);
  }
  fn("proj_w", p.proj_w);
  fn("proj_b", p.proj_b);
  fn("delta", p.delta);
}

class TaggerModel {
 public:
  Vocabulary vocab;
  EncoderConfig config;
  ModelParams params;

  static TaggerModel init(Vocabulary vocab, EncoderConfig config, Rng& rng,
                          const EmbeddingTable* pretrained = nullptr) {
    config.validate();
    TaggerModel m;
    m.vocab = std::move(vocab);
    m.config = config;
    if (pretrained) {
      if (pretrained->dim != config.word_emb_dim)
        throw ConfigError("pretrained embedding dim " +
                          std::to_string(pretrained->dim) +
                          " does not match word_emb_dim " +
                          std::to_string(config.word_emb_dim));
      m.params.word_emb = Param(pretrained->vectors);
    } else {
      m.params.word_emb = Param(
          rng.uniform_array({m.vocab.num_words(), config.word_emb_dim},
                            -std::sqrt(3.0 / config.word_emb_dim),
                            std::sqrt(3.0 / config.word_emb_dim)));
    }
    m.params.char_emb = Param(
        rng.uniform_array({m.vocab.num_chars(), config.char_emb_dim},
                          -std::sqrt(3.0 / config.char_emb_dim),
                          std::sqrt(3.0 / config.char_emb_dim)));
    m.params.char_fwd =
        LstmParams::init(rng, config.char_emb_dim, config.char_hidden_dim);
    m.params.char_bwd =
        LstmParams::init(rng, config.char_emb_dim, config.char_hidden_dim);
    for (int layer = 0; layer < config.stack_layers; ++layer) {
      int in = layer == 0 ? config.feature_dim()
                          : config.output_dim() + config.feature_dim();
      m.params.word_fwd.push_back(
          LstmParams::init(rng, in, config.word_hidden_dim));
      m.params.word_bwd.push_back(
          LstmParams::init(rng, in, config.word_hidden_dim));
    }
    int l = m.vocab.num_labels();
    m.params.proj_w = Param(init_weight(rng, l, config.output_dim()));
    m.params.proj_b = Param(Array({l}));
    m.params.delta = Param(Transitions::make(m.vocab.num_real_labels()).delta);
    return m;
  }

  Transitions transitions() const {
    return Transitions::wrap(params.delta.value);
  }

  // Forward graph up to the observation lattice.
  struct Forward {
    Tape tape;
    Tape::NodeId lattice_node = -1;
    std::vector<std::pair<Param*, Tape::NodeId>> leaves;
    std::vector<int> layer_input_dims;
  };

  Forward build_forward(const Sentence& s, const Array* aux, bool training,
                        Rng* dropout_rng) const {
    if (s.size() < 1) throw DataError("cannot encode an empty sentence");
    if (aux && (aux->rows() != s.size() || aux->cols() != config.aux_dim))
      throw ShapeError("aux features " + aux->shape_string() + " for a " +
                       std::to_string(s.size()) + "-token sentence with aux_dim " +
                       std::to_string(config.aux_dim));
    if (!aux && config.aux_dim > 0)
      throw DataError("model expects aux features of dim " +
                      std::to_string(config.aux_dim));

    Forward fw;
    Tape& tape = fw.tape;
    auto* self = const_cast<TaggerModel*>(this);
    auto leaf_of = [&](Param& p) {
      Tape::NodeId id = tape.leaf(p.value);
      fw.leaves.emplace_back(&p, id);
      return id;
    };
    auto lstm_leaves_of = [&](LstmParams& p) {
      return LstmLeaves{leaf_of(p.w), leaf_of(p.u), leaf_of(p.b), p.hidden_dim};
    };

    Tape::NodeId word_table = leaf_of(self->params.word_emb);
    Tape::NodeId char_table = leaf_of(self->params.char_emb);
    LstmLeaves cf = lstm_leaves_of(self->params.char_fwd);
    LstmLeaves cb = lstm_leaves_of(self->params.char_bwd);
    std::vector<LstmLeaves> wf, wb;
    for (int m = 0; m < config.stack_layers; ++m) {
      wf.push_back(lstm_leaves_of(self->params.word_fwd[m]));
      wb.push_back(lstm_leaves_of(self->params.word_bwd[m]));
    }
    Tape::NodeId proj_w = leaf_of(self->params.proj_w);
    Tape::NodeId proj_b = leaf_of(self->params.proj_b);

    Tape::NodeId word_rows = tape.gather_rows(word_table, vocab.word_id_seq(s));
    auto char_ids = vocab.char_id_seqs(s);
    Tape::NodeId aux_leaf = aux ? tape.leaf(*aux) : -1;

    bool use_dropout = training && config.dropout_rate > 0.0;
    std::vector<Tape::NodeId> xs;
    xs.reserve(static_cast<size_t>(s.size()));
    for (int k = 0; k < s.size(); ++k) {
      Tape::NodeId hc = char_birnn(tape, cf, cb, char_table, char_ids[k]);
      std::vector<Tape::NodeId> parts = {hc, tape.row(word_rows, k)};
      if (aux) parts.push_back(tape.row(aux_leaf, k));
      Tape::NodeId x = tape.concat(parts, 0);
      if (use_dropout)
        x = tape.dropout(x, make_dropout_mask(*dropout_rng,
                                              tape.value(x).shape,
                                              config.dropout_rate));
      xs.push_back(x);
    }

    auto enc = stacked_residual_encode(tape, wf, wb, xs);
    fw.layer_input_dims = enc.layer_input_dims;
    std::vector<Tape::NodeId> lam_rows;
    lam_rows.reserve(enc.h.size());
    for (Tape::NodeId h : enc.h)
      lam_rows.push_back(tape.add(tape.matvec(proj_w, h), proj_b));
    fw.lattice_node = tape.stack_rows(lam_rows);
    return fw;
  }

  ScoreLattice lattice(const Sentence& s, const Array* aux = nullptr) const {
    Forward fw = build_forward(s, aux, /*training=*/false, nullptr);
    ScoreLattice lat;
    lat.lambda = fw.tape.value(fw.lattice_node);
    return lat;
  }

  // One training example: CRF loss, with gradients accumulated into every
  // parameter (the tape handles the encoder, forward-backward handles the
  // CRF terms).
  double loss_and_grads(const Sentence& s, const std::vector<int>& gold,
                        Rng* dropout_rng = nullptr, const Array* aux = nullptr) {
    Forward fw = build_forward(s, aux, /*training=*/true, dropout_rng);
    ScoreLattice lat;
    lat.lambda = fw.tape.value(fw.lattice_node);
    CrfResult res = nll_loss(lat, transitions(), gold);
    fw.tape.backward(fw.lattice_node, res.dlambda);
    for (auto& [param, leaf] : fw.leaves) {
      const Array& g = fw.tape.grad(leaf);
      for (int i = 0; i < g.size(); ++i) param->grad[i] += g[i];
    }
    for (int i = 0; i < res.ddelta.size(); ++i)
      params.delta.grad[i] += res.ddelta[i];
    return res.loss;
  }

  std::vector<int> predict(const Sentence& s, const BiasVector* bias = nullptr,
                           bool constrain = false,
                           const Array* aux = nullptr) const {
    ScoreLattice lat = lattice(s, aux);
    Transitions tr = transitions();
    if (constrain) tr = constrain_transitions(tr, vocab);
    DecodeResult r = bias ? biased_viterbi(lat, tr, *bias) : viterbi(lat, tr);
    return r.labels;
  }

  // Per-sentence independent decoding of a whole dataset, as label strings.
  std::vector<std::vector<std::string>> decode_dataset(
      const std::vector<Sentence>& sentences, const BiasVector* bias = nullptr,
      bool constrain = false, const AuxFeatures* aux = nullptr) const {
    if (aux && aux->per_sentence.size() != sentences.size())
      throw DataError("aux features cover " +
                      std::to_string(aux->per_sentence.size()) +
                      " sentences, dataset has " +
                      std::to_string(sentences.size()));
    std::vector<std::vector<std::string>> out;
    out.reserve(sentences.size());
    for (size_t i = 0; i < sentences.size(); ++i)
      out.push_back(vocab.label_strings(
          predict(sentences[i], bias, constrain,
                  aux ? &aux->per_sentence[i] : nullptr)));
    return out;
  }

  // Observation lattices are bias-independent; cache them once so bias
  // training can re-decode cheaply.
  std::vector<ScoreLattice> lattice_cache(
      const std::vector<Sentence>& sentences,
      const AuxFeatures* aux = nullptr) const {
    std::vector<ScoreLattice> out;
    out.reserve(sentences.size());
    for (size_t i = 0; i < sentences.size(); ++i)
      out.push_back(lattice(sentences[i], aux ? &aux->per_sentence[i] : nullptr));
    return out;
  }

  void zero_grads() {
    for_each_param(params, [](const std::string&, Param& p) { p.zero_grad(); });
  }
};

}  // namespace seqtag
