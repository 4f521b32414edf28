#include <catch2/catch_amalgamated.hpp>

#include "oracle_utils.hpp"
#include "seqtag/model.hpp"

using namespace seqtag;

namespace {

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM recomputation, gate order [i, f, g, o]; returns the final
// hidden state. Independent of the tape path.
std::vector<double> manual_lstm_final(const Array& w, const Array& u,
                                      const Array& b,
                                      const std::vector<std::vector<double>>& xs) {
  int H = b.size() / 4;
  std::vector<double> h(H, 0.0), c(H, 0.0);
  for (const auto& x : xs) {
    std::vector<double> gates(4 * H);
    for (int g = 0; g < 4 * H; ++g) {
      double s = b[g];
      for (size_t j = 0; j < x.size(); ++j) s += w(g, static_cast<int>(j)) * x[j];
      for (int j = 0; j < H; ++j) s += u(g, j) * h[j];
      gates[g] = s;
    }
    for (int j = 0; j < H; ++j) {
      double gi = sigmoid_ref(gates[j]);
      double gf = sigmoid_ref(gates[H + j]);
      double gc = std::tanh(gates[2 * H + j]);
      double go = sigmoid_ref(gates[3 * H + j]);
      c[j] = gf * c[j] + gi * gc;
      h[j] = go * std::tanh(c[j]);
    }
  }
  return h;
}

TaggerModel toy_model(EncoderConfig cfg, uint64_t seed = 11) {
  auto corpus = oracle::make_synthetic_corpus(3, 6, 0).train;
  auto vocab = build_vocabulary(corpus, 1, Scheme::BIO);
  Rng rng(seed);
  return TaggerModel::init(std::move(vocab), cfg, rng);
}

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.char_emb_dim = 3;
  cfg.char_hidden_dim = 2;
  cfg.word_emb_dim = 4;
  cfg.word_hidden_dim = 3;
  cfg.stack_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("char_birnn output width is twice the char hidden size") {
  Rng rng(5);
  int Ce = 4, Hc = 25;
  auto fwd = LstmParams::init(rng, Ce, Hc);
  auto bwd = LstmParams::init(rng, Ce, Hc);
  Array table = rng.uniform_array({10, Ce}, -1, 1);
  Tape tape;
  auto tleaf = tape.leaf(table);
  auto out = char_birnn(tape, lstm_leaves(tape, fwd), lstm_leaves(tape, bwd),
                        tleaf, {1, 4, 2});
  CHECK(tape.value(out).size() == 2 * Hc);

  // single-character word: one step each direction, same output width
  auto out1 = char_birnn(tape, lstm_leaves(tape, fwd), lstm_leaves(tape, bwd),
                         tleaf, {3});
  CHECK(tape.value(out1).size() == 2 * Hc);

  CHECK_THROWS_AS(char_birnn(tape, lstm_leaves(tape, fwd),
                             lstm_leaves(tape, bwd), tleaf, {}),
                  ShapeError);
}

TEST_CASE("char_birnn matches a direct plain-loop recomputation") {
  Rng rng(9);
  int Ce = 3, Hc = 4;
  auto fwd = LstmParams::init(rng, Ce, Hc);
  auto bwd = LstmParams::init(rng, Ce, Hc);
  Array table = rng.uniform_array({8, Ce}, -1, 1);
  std::vector<int> ids = {2, 7, 0, 5};

  Tape tape;
  auto out = char_birnn(tape, lstm_leaves(tape, fwd), lstm_leaves(tape, bwd),
                        tape.leaf(table), ids);
  const Array& got = tape.value(out);

  std::vector<std::vector<double>> xs, rxs;
  for (int id : ids) {
    std::vector<double> row(Ce);
    for (int j = 0; j < Ce; ++j) row[static_cast<size_t>(j)] = table(id, j);
    xs.push_back(row);
  }
  rxs.assign(xs.rbegin(), xs.rend());
  auto f = manual_lstm_final(fwd.w.value, fwd.u.value, fwd.b.value, xs);
  auto b = manual_lstm_final(bwd.w.value, bwd.u.value, bwd.b.value, rxs);
  REQUIRE(got.size() == 2 * Hc);
  for (int j = 0; j < Hc; ++j) {
    CHECK(got[j] == Catch::Approx(f[static_cast<size_t>(j)]).margin(1e-12));
    CHECK(got[Hc + j] == Catch::Approx(b[static_cast<size_t>(j)]).margin(1e-12));
  }
}

TEST_CASE("reversed input with swapped directions swaps the two halves") {
  Rng rng(13);
  int Ce = 3, Hc = 5;
  auto pa = LstmParams::init(rng, Ce, Hc);
  auto pb = LstmParams::init(rng, Ce, Hc);
  Array table = rng.uniform_array({9, Ce}, -1, 1);
  std::vector<int> ids = {1, 8, 3};
  std::vector<int> rids(ids.rbegin(), ids.rend());

  Tape t1, t2;
  auto o1 = char_birnn(t1, lstm_leaves(t1, pa), lstm_leaves(t1, pb),
                       t1.leaf(table), ids);
  auto o2 = char_birnn(t2, lstm_leaves(t2, pb), lstm_leaves(t2, pa),
                       t2.leaf(table), rids);
  const Array& v1 = t1.value(o1);
  const Array& v2 = t2.value(o2);
  for (int j = 0; j < Hc; ++j) {
    CHECK(v1[j] == v2[Hc + j]);
    CHECK(v1[Hc + j] == v2[j]);
  }
}

TEST_CASE("word feature widths follow the concatenation arithmetic") {
  {
    EncoderConfig cfg;  // defaults: char hidden 25, word emb 100
    CHECK(cfg.feature_dim() == 150);
    cfg.aux_dim = 300;
    CHECK(cfg.feature_dim() == 450);
  }
  auto cfg = small_config();
  auto model = toy_model(cfg);
  Sentence s = make_sentence({"anna", "visited", "oslo"});
  auto fw = model.build_forward(s, nullptr, false, nullptr);
  CHECK(fw.layer_input_dims[0] == cfg.feature_dim());
  CHECK(fw.tape.value(fw.lattice_node).rows() == 3);
  CHECK(fw.tape.value(fw.lattice_node).cols() == model.vocab.num_labels());
}

TEST_CASE("aux features join the word feature vector") {
  auto cfg = small_config();
  cfg.aux_dim = 2;
  auto model = toy_model(cfg);
  Sentence s = make_sentence({"anna", "visited"});
  Rng rng(3);
  Array aux = rng.uniform_array({2, 2}, -1, 1);
  auto fw = model.build_forward(s, &aux, false, nullptr);
  CHECK(fw.layer_input_dims[0] == cfg.feature_dim());

  Array bad = rng.uniform_array({3, 2}, -1, 1);
  CHECK_THROWS_AS(model.build_forward(s, &bad, false, nullptr), ShapeError);
  CHECK_THROWS_AS(model.build_forward(s, nullptr, false, nullptr), DataError);

  // and a varying aux row changes the lattice
  Array aux2 = aux;
  aux2(0, 0) += 0.5;
  CHECK_FALSE(model.lattice(s, &aux).lambda == model.lattice(s, &aux2).lambda);
}

TEST_CASE("stack input widths for hidden 100 and d_x 150") {
  EncoderConfig cfg;  // 2*25 + 100 = 150
  for (int m : {1, 2, 3, 4}) {
    cfg.stack_layers = m;
    auto model = toy_model(cfg, 17);
    Sentence s = make_sentence({"anna", "left"});
    auto fw = model.build_forward(s, nullptr, false, nullptr);
    REQUIRE(static_cast<int>(fw.layer_input_dims.size()) == m);
    CHECK(fw.layer_input_dims[0] == 150);
    for (int k = 1; k < m; ++k) CHECK(fw.layer_input_dims[k] == 350);
    // the CRF sees the bare final layer: 2 * 100 wide
    CHECK(model.params.proj_w.value.cols() == 200);
  }
}

TEST_CASE("M=1 is a plain biRNN with no residual concat") {
  auto cfg = small_config();
  cfg.stack_layers = 1;
  auto model = toy_model(cfg);
  Sentence s = make_sentence({"anna", "visited", "oslo", "."});
  auto fw = model.build_forward(s, nullptr, false, nullptr);
  CHECK(fw.layer_input_dims == std::vector<int>{cfg.feature_dim()});
}

TEST_CASE("sequence length is preserved through every layer") {
  auto cfg = small_config();
  cfg.stack_layers = 3;
  auto model = toy_model(cfg);
  for (int n : {1, 2, 5, 9}) {
    std::vector<std::string> words(static_cast<size_t>(n), "anna");
    auto lat = model.lattice(make_sentence(words));
    CHECK(lat.length() == n);
  }
}

TEST_CASE("zeroed h-block weights still pass raw input upward") {
  auto cfg = small_config();
  cfg.stack_layers = 3;
  auto model = toy_model(cfg, 23);
  int h_block = cfg.output_dim();
  for (int m = 1; m < cfg.stack_layers; ++m) {
    for (auto* lp : {&model.params.word_fwd[m], &model.params.word_bwd[m]})
      for (int g = 0; g < lp->w.value.rows(); ++g)
        for (int j = 0; j < h_block; ++j) lp->w.value(g, j) = 0.0;
  }
  auto lat1 = model.lattice(make_sentence({"anna", "visited", "oslo"}));
  auto lat2 = model.lattice(make_sentence({"boris", "left", "lima"}));
  CHECK_FALSE(lat1.lambda == lat2.lambda);
}

TEST_CASE("eval mode is deterministic and dropout-free") {
  auto cfg = small_config();
  cfg.dropout_rate = 0.5;
  auto model = toy_model(cfg);
  Sentence s = make_sentence({"anna", "visited", "oslo"});
  auto a = model.lattice(s);
  auto b = model.lattice(s);
  CHECK(a.lambda == b.lambda);  // bit-identical

  // training mode with dropout differs run to run
  auto gold = std::vector<int>{0, 0, 0};
  Rng drop1(1), drop2(2);
  model.zero_grads();
  double l1 = model.loss_and_grads(s, gold, &drop1);
  model.zero_grads();
  double l2 = model.loss_and_grads(s, gold, &drop2);
  CHECK(l1 != l2);
}

TEST_CASE("identical seeds give identical models, different seeds differ") {
  auto cfg = small_config();
  auto corpus = oracle::make_synthetic_corpus(3, 6, 0).train;
  auto vocab = build_vocabulary(corpus, 1, Scheme::BIO);
  Rng r1(42), r2(42), r3(43);
  auto m1 = TaggerModel::init(vocab, cfg, r1);
  auto m2 = TaggerModel::init(vocab, cfg, r2);
  auto m3 = TaggerModel::init(vocab, cfg, r3);
  bool all_equal = true, any_diff_seed3 = false;
  std::vector<Array*> a1, a2, a3;
  for_each_param(m1.params, [&](const std::string&, Param& p) { a1.push_back(&p.value); });
  for_each_param(m2.params, [&](const std::string&, Param& p) { a2.push_back(&p.value); });
  for_each_param(m3.params, [&](const std::string&, Param& p) { a3.push_back(&p.value); });
  for (size_t i = 0; i < a1.size(); ++i) {
    all_equal &= (*a1[i] == *a2[i]);
    any_diff_seed3 |= !(*a1[i] == *a3[i]);
  }
  CHECK(all_equal);
  CHECK(any_diff_seed3);
  // bias vectors start at zero
  for (double v : m1.params.proj_b.value.data) CHECK(v == 0.0);
  for (double v : m1.params.char_fwd.b.value.data) CHECK(v == 0.0);
}

TEST_CASE("end-to-end NLL gradient passes the finite-difference check") {
  auto cfg = small_config();
  cfg.stack_layers = 3;
  auto model = toy_model(cfg, 29);
  Sentence s = make_sentence({"anna", "visited", "oslo"});
  std::vector<int> gold = {model.vocab.label_id("B-PER"),
                           model.vocab.label_id("O"),
                           model.vocab.label_id("B-LOC")};

  model.zero_grads();
  model.loss_and_grads(s, gold);

  auto loss_at = [&]() {
    auto fw = model.build_forward(s, nullptr, false, nullptr);
    ScoreLattice lat;
    lat.lambda = fw.tape.value(fw.lattice_node);
    return nll_loss(lat, model.transitions(), gold).loss;
  };

  const double h = 1e-5;
  double worst = 0.0;
  for_each_param(model.params, [&](const std::string& name, Param& p) {
    for (int i = 0; i < p.value.size(); ++i) {
      double orig = p.value[i];
      p.value[i] = orig + h;
      double up = loss_at();
      p.value[i] = orig - h;
      double down = loss_at();
      p.value[i] = orig;
      double fd = (up - down) / (2.0 * h);
      double err = std::abs(p.grad[i] - fd) / std::max(1.0, std::abs(p.grad[i]));
      INFO(name << "[" << i << "]");
      if (err > worst) worst = err;
      REQUIRE(err < 1e-4);
    }
  });
  CHECK(worst < 1e-4);
}
