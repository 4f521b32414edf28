// seqtag: train, tag, bias-train, bias-search, eval, significance.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "seqtag/seqtag.hpp"

namespace {

using namespace seqtag;

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config_file(config_path);
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

void print_config(const RunConfig& cfg) {
  std::cout << "# resolved configuration\n" << emit_config(cfg)
            << "# end configuration\n";
}

std::vector<Sentence> load_labeled_corpus(const RunConfig& cfg,
                                          const std::string& path) {
  auto sentences = parse_conll(read_text_file(path), cfg.word_column,
                               cfg.label_column);
  if (sentences.empty()) throw DataError("no sentences in " + path);
  normalize_to_bio(sentences, cfg.input_scheme(), cfg.repair);
  return sentences;
}

std::string format_bias(const BiasVector& bias, const Vocabulary& vocab) {
  std::string out;
  for (int y = 0; y < vocab.num_real_labels(); ++y) {
    if (y) out += ',';
    out += vocab.labels[static_cast<size_t>(y)] + "=" +
           seqtag::detail::format_double(bias.b[y]);
  }
  return out;
}

const AuxFeatures* maybe_load_aux(const std::string& path,
                                  const std::vector<Sentence>& corpus,
                                  int expected_dim, AuxFeatures& storage) {
  if (path.empty()) return nullptr;
  storage = load_aux_features(path, corpus);
  if (storage.dim != expected_dim)
    throw ConfigError("aux file " + path + " has dim " +
                      std::to_string(storage.dim) + " but aux_dim is " +
                      std::to_string(expected_dim));
  return &storage;
}

int cmd_train(const RunConfig& cfg, const std::string& train_path,
              const std::string& dev_path, const std::string& out_path,
              const std::string& train_aux_path,
              const std::string& dev_aux_path) {
  auto train_set = load_labeled_corpus(cfg, train_path);
  auto dev_set = load_labeled_corpus(cfg, dev_path);
  auto vocab = build_vocabulary(train_set, cfg.min_word_freq, Scheme::BIO);
  std::cout << "vocabulary: " << vocab.num_words() << " words, "
            << vocab.num_chars() << " chars, " << vocab.num_labels()
            << " labels\n";

  Rng rng(cfg.seed);
  EmbeddingTable table;
  const EmbeddingTable* pretrained = nullptr;
  if (!cfg.embeddings.empty()) {
    table = load_embeddings(cfg.embeddings, vocab, rng);
    std::printf("embeddings: dim %d, coverage %.2f%% (%d rows)\n", table.dim,
                100.0 * table.coverage, table.covered_rows);
    pretrained = &table;
  }
  auto model = TaggerModel::init(vocab, cfg.encoder_config(), rng, pretrained);

  AuxFeatures train_aux, dev_aux;
  const AuxFeatures* ta =
      maybe_load_aux(train_aux_path, train_set, cfg.aux_dim, train_aux);
  const AuxFeatures* da =
      maybe_load_aux(dev_aux_path, dev_set, cfg.aux_dim, dev_aux);

  auto res = train(std::move(model), train_set, dev_set, cfg.train_config(),
                   &std::cout, ta, da);
  save_checkpoint(out_path, res.model, res.best_dev_f1);
  std::printf("best epoch %d dev_f1 %.2f -> %s\n", res.best_epoch,
              res.best_dev_f1, out_path.c_str());
  return 0;
}

int cmd_tag(const RunConfig& cfg, const std::string& model_path,
            const std::string& input_path, const std::string& output_path,
            const std::string& bias_path, const std::string& aux_path) {
  auto loaded = load_checkpoint(model_path);
  const TaggerModel& model = loaded.model;
  auto parsed = parse_conll_keep_raw(read_text_file(input_path),
                                     cfg.word_column, kNoLabels);
  AuxFeatures aux_storage;
  const AuxFeatures* aux = maybe_load_aux(aux_path, parsed.sentences,
                                          model.config.aux_dim, aux_storage);
  BiasVector bias = BiasVector::ones(model.vocab.num_labels());
  if (!bias_path.empty()) bias = read_bias_file(bias_path, model.vocab);

  std::ofstream out(output_path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + output_path);
  for (size_t i = 0; i < parsed.sentences.size(); ++i) {
    auto labels = model.vocab.label_strings(model.predict(
        parsed.sentences[i], &bias, cfg.constrain_decode,
        aux ? &aux->per_sentence[i] : nullptr));
    for (size_t t = 0; t < labels.size(); ++t)
      out << parsed.raw_lines[i][t] << ' ' << labels[t] << '\n';
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + output_path);
  std::cout << "tagged " << parsed.sentences.size() << " sentences -> "
            << output_path << "\n";
  return 0;
}

int cmd_bias_train(const RunConfig& cfg, const std::string& model_path,
                   const std::string& dev_path, const std::string& out_path,
                   const std::string& dev_aux_path) {
  auto loaded = load_checkpoint(model_path);
  auto dev_set = load_labeled_corpus(cfg, dev_path);
  AuxFeatures aux_storage;
  const AuxFeatures* aux = maybe_load_aux(dev_aux_path, dev_set,
                                          loaded.model.config.aux_dim,
                                          aux_storage);
  auto res = train_bias(loaded.model, dev_set, cfg.bias_config(),
                        cfg.constrain_decode, aux);
  for (const auto& e : res.trace) {
    BiasVector b;
    b.b = e.bias;
    std::printf("update %d eps %g dev_f1 %.2f bias %s\n", e.update, e.epsilon,
                e.dev_f1, format_bias(b, loaded.model.vocab).c_str());
  }
  write_bias_file(out_path, res.best, loaded.model.vocab);
  std::printf("baseline dev_f1 %.2f best dev_f1 %.2f bias %s -> %s\n",
              res.baseline_f1, res.best_f1,
              format_bias(res.best, loaded.model.vocab).c_str(),
              out_path.c_str());
  return 0;
}

int cmd_bias_search(const RunConfig& cfg, const std::string& model_path,
                    const std::string& dev_path, const std::string& label,
                    double lo, double hi, double step,
                    const std::string& dev_aux_path) {
  auto loaded = load_checkpoint(model_path);
  auto dev_set = load_labeled_corpus(cfg, dev_path);
  AuxFeatures aux_storage;
  const AuxFeatures* aux = maybe_load_aux(dev_aux_path, dev_set,
                                          loaded.model.config.aux_dim,
                                          aux_storage);
  auto it = loaded.model.vocab.label_ids.find(label);
  if (it == loaded.model.vocab.label_ids.end() ||
      it->second >= loaded.model.vocab.num_real_labels())
    throw ConfigError("'" + label + "' is not a real label of this model");
  auto res = grid_search_bias(loaded.model, dev_set, it->second, lo, hi, step,
                              cfg.constrain_decode, aux);
  for (const auto& [value, f1] : res.curve)
    std::printf("bias %s dev_f1 %.2f\n",
                seqtag::detail::format_double(value).c_str(), f1);
  std::printf("best %s dev_f1 %.2f\n",
              seqtag::detail::format_double(res.best_value).c_str(),
              res.best_f1);
  return 0;
}

// Canonicalize to BIO so token accuracy compares like for like even when the
// files use different schemes; entities are unchanged by this.
std::vector<std::vector<std::string>> labels_of(
    const std::vector<Sentence>& sentences) {
  std::vector<std::vector<std::string>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences)
    out.push_back(repair_labels(s.labels, Scheme::BIO));
  return out;
}

int cmd_eval(const RunConfig& cfg, const std::string& pred_path,
             const std::string& gold_path) {
  auto pred = parse_conll(read_text_file(pred_path), cfg.word_column,
                          kLastColumn);
  auto gold = parse_conll(read_text_file(gold_path), cfg.word_column,
                          cfg.label_column);
  auto report = entity_f1(labels_of(pred), labels_of(gold));
  std::cout << format_report(report);
  return 0;
}

int cmd_significance(const RunConfig& cfg, const std::string& a_path,
                     const std::string& b_path, const std::string& gold_path) {
  auto a = parse_conll(read_text_file(a_path), cfg.word_column, kLastColumn);
  auto b = parse_conll(read_text_file(b_path), cfg.word_column, kLastColumn);
  auto gold = parse_conll(read_text_file(gold_path), cfg.word_column,
                          cfg.label_column);
  auto la = labels_of(a), lb = labels_of(b), lg = labels_of(gold);
  double f1_a = entity_f1(la, lg).f1;
  double f1_b = entity_f1(lb, lg).f1;
  double p = randomization_test(la, lb, lg, cfg.iterations, cfg.seed);
  std::printf("system_a_f1: %.2f\nsystem_b_f1: %.2f\nobserved_diff: %.2f\n",
              f1_a, f1_b, std::abs(f1_a - f1_b));
  std::printf("iterations: %d\np_value: %.6f\n", cfg.iterations, p);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqtag: stacked-residual biRNN-CRF sequence tagger with"
               " trainable percentage-bias decoding"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--set may follow the subcommand name

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "config file (key = value lines)");
  app.add_option("--set", overrides, "override a config key, key=value");

  auto* train_cmd = app.add_subcommand("train", "train a tagger");
  std::string train_file, dev_file, out_ckpt, train_aux, dev_aux;
  train_cmd->add_option("--train", train_file, "training CoNLL file")->required();
  train_cmd->add_option("--dev", dev_file, "development CoNLL file")->required();
  train_cmd->add_option("--out", out_ckpt, "output checkpoint")->required();
  train_cmd->add_option("--train-aux", train_aux, "aux vectors for --train");
  train_cmd->add_option("--dev-aux", dev_aux, "aux vectors for --dev");

  auto* tag_cmd = app.add_subcommand("tag", "tag a CoNLL file");
  std::string model_file, input_file, output_file, bias_file, tag_aux;
  tag_cmd->add_option("--model", model_file, "checkpoint")->required();
  tag_cmd->add_option("--input", input_file, "input CoNLL file")->required();
  tag_cmd->add_option("--output", output_file, "output file")->required();
  tag_cmd->add_option("--bias", bias_file, "bias file (LABEL<TAB>value)");
  tag_cmd->add_option("--aux", tag_aux, "aux vectors for --input");

  auto* bt_cmd = app.add_subcommand("bias-train",
                                    "train decode biases on dev F1");
  std::string bt_model, bt_dev, bt_out, bt_aux;
  bt_cmd->add_option("--model", bt_model, "checkpoint")->required();
  bt_cmd->add_option("--dev", bt_dev, "development CoNLL file")->required();
  bt_cmd->add_option("--out", bt_out, "output bias file")->required();
  bt_cmd->add_option("--dev-aux", bt_aux, "aux vectors for --dev");

  auto* bs_cmd = app.add_subcommand("bias-search",
                                    "grid-search one label's bias");
  std::string bs_model, bs_dev, bs_label, bs_aux;
  double bs_lo = 0.5, bs_hi = 1.5, bs_step = 0.1;
  bs_cmd->add_option("--model", bs_model, "checkpoint")->required();
  bs_cmd->add_option("--dev", bs_dev, "development CoNLL file")->required();
  bs_cmd->add_option("--label", bs_label, "label to search, e.g. O")->required();
  bs_cmd->add_option("--lo", bs_lo, "grid start");
  bs_cmd->add_option("--hi", bs_hi, "grid end");
  bs_cmd->add_option("--step", bs_step, "grid step");
  bs_cmd->add_option("--dev-aux", bs_aux, "aux vectors for --dev");

  auto* eval_cmd = app.add_subcommand("eval", "entity-level P/R/F1");
  std::string eval_pred, eval_gold;
  eval_cmd->add_option("--pred", eval_pred, "tagged file (label = last column)")
      ->required();
  eval_cmd->add_option("--gold", eval_gold, "gold CoNLL file")->required();

  auto* sig_cmd = app.add_subcommand(
      "significance", "paired randomization test on entity F1");
  std::string sig_a, sig_b, sig_gold;
  sig_cmd->add_option("--pred-a", sig_a, "system A output")->required();
  sig_cmd->add_option("--pred-b", sig_b, "system B output")->required();
  sig_cmd->add_option("--gold", sig_gold, "gold CoNLL file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(config_path, overrides);
    print_config(cfg);
    if (*train_cmd)
      return cmd_train(cfg, train_file, dev_file, out_ckpt, train_aux, dev_aux);
    if (*tag_cmd)
      return cmd_tag(cfg, model_file, input_file, output_file, bias_file,
                     tag_aux);
    if (*bt_cmd) return cmd_bias_train(cfg, bt_model, bt_dev, bt_out, bt_aux);
    if (*bs_cmd)
      return cmd_bias_search(cfg, bs_model, bs_dev, bs_label, bs_lo, bs_hi,
                             bs_step, bs_aux);
    if (*eval_cmd) return cmd_eval(cfg, eval_pred, eval_gold);
    if (*sig_cmd) return cmd_significance(cfg, sig_a, sig_b, sig_gold);
  } catch (const ConfigError& e) {
    std::cerr << "error (usage): " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error (data): " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error (numeric): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
