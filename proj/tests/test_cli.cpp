#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracle_utils.hpp"
#include "seqtag/checkpoint.hpp"
#include "seqtag/config.hpp"

using namespace seqtag;

namespace {

namespace fs = std::filesystem;

struct CliRun {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("seqtag_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

CliRun run_cli(const std::string& args, const TempDir& tmp) {
  static int log_counter = 0;
  std::string log = tmp.file("cli_log_" + std::to_string(log_counter++));
  std::string cmd = std::string(SEQTAG_CLI_PATH) + " " + args + " > " + log +
                    " 2>&1";
  int status = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WEXITSTATUS(status);
  std::ifstream f(log);
  std::ostringstream ss;
  ss << f.rdbuf();
  run.output = ss.str();
  return run;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  f << content;
}

// Deterministic tiny corpus files in canonical BIO.
void write_corpus(const TempDir& tmp) {
  auto corpus = oracle::make_synthetic_corpus(77, 24, 10);
  write_file(tmp.file("train.conll"), serialize_conll(corpus.train));
  write_file(tmp.file("dev.conll"), serialize_conll(corpus.dev));
}

const char* kSmallModel =
    " --set char_emb_dim=4 --set char_hidden_dim=4 --set word_emb_dim=6"
    " --set word_hidden_dim=6 --set stack_layers=2 --set learning_rate=0.05"
    " --set epochs=6 --set patience=6 --set seed=5";

double result_f1(const std::string& report) {
  auto pos = report.find("f1: ");
  REQUIRE(pos != std::string::npos);
  return std::stod(report.substr(pos + 4));
}

}  // namespace

TEST_CASE("cli: train, tag, eval round trip on the synthetic corpus") {
  TempDir tmp;
  write_corpus(tmp);
  auto train = run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                           tmp.file("dev.conll") + " --out " +
                           tmp.file("m.ckpt") + kSmallModel,
                       tmp);
  INFO(train.output);
  REQUIRE(train.exit_code == 0);
  CHECK(train.output.find("# resolved configuration") != std::string::npos);
  CHECK(train.output.find("epoch 1 ") != std::string::npos);

  auto tag = run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                         tmp.file("dev.conll") + " --output " +
                         tmp.file("dev.tagged"),
                     tmp);
  INFO(tag.output);
  REQUIRE(tag.exit_code == 0);

  auto eval = run_cli("eval --pred " + tmp.file("dev.tagged") + " --gold " +
                          tmp.file("dev.conll"),
                      tmp);
  INFO(eval.output);
  REQUIRE(eval.exit_code == 0);
  CHECK(eval.output.find("RESULT") != std::string::npos);

  // identical pred and gold evaluate to F1 100.00
  auto self_eval = run_cli("eval --pred " + tmp.file("dev.conll") + " --gold " +
                               tmp.file("dev.conll"),
                           tmp);
  REQUIRE(self_eval.exit_code == 0);
  CHECK(result_f1(self_eval.output) == 100.0);
}

TEST_CASE("cli: an all-ones bias file leaves tag output byte-identical") {
  TempDir tmp;
  write_corpus(tmp);
  REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                      tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                      kSmallModel,
                  tmp)
              .exit_code == 0);
  // bias file in model label order with every value 1
  auto loaded = load_checkpoint(tmp.file("m.ckpt"));
  write_bias_file(tmp.file("ones.tsv"),
                  BiasVector::ones(loaded.model.vocab.num_labels()),
                  loaded.model.vocab);

  REQUIRE(run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                      tmp.file("dev.conll") + " --output " + tmp.file("plain"),
                  tmp)
              .exit_code == 0);
  REQUIRE(run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                      tmp.file("dev.conll") + " --output " + tmp.file("biased") +
                      " --bias " + tmp.file("ones.tsv"),
                  tmp)
              .exit_code == 0);
  CHECK(slurp(tmp.file("plain")) == slurp(tmp.file("biased")));
}

TEST_CASE("cli: bias training never loses to the unbiased decode") {
  TempDir tmp;
  write_corpus(tmp);
  // under-train so the dev decode is imperfect and the bias has room to act
  REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                      tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                      " --set char_emb_dim=4 --set char_hidden_dim=4"
                      " --set word_emb_dim=6 --set word_hidden_dim=6"
                      " --set stack_layers=1 --set learning_rate=0.02"
                      " --set epochs=1 --set seed=11",
                  tmp)
              .exit_code == 0);
  auto bt = run_cli("bias-train --model " + tmp.file("m.ckpt") + " --dev " +
                        tmp.file("dev.conll") + " --out " + tmp.file("bias.tsv") +
                        " --set bias_max_updates=30 --set bias_patience=30",
                    tmp);
  INFO(bt.output);
  REQUIRE(bt.exit_code == 0);

  REQUIRE(run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                      tmp.file("dev.conll") + " --output " + tmp.file("plain"),
                  tmp)
              .exit_code == 0);
  REQUIRE(run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                      tmp.file("dev.conll") + " --output " + tmp.file("biased") +
                      " --bias " + tmp.file("bias.tsv"),
                  tmp)
              .exit_code == 0);
  auto f1_plain = result_f1(run_cli("eval --pred " + tmp.file("plain") +
                                        " --gold " + tmp.file("dev.conll"),
                                    tmp)
                                .output);
  auto f1_biased = result_f1(run_cli("eval --pred " + tmp.file("biased") +
                                         " --gold " + tmp.file("dev.conll"),
                                     tmp)
                                 .output);
  CHECK(f1_biased >= f1_plain);
}

TEST_CASE("cli: bias-search prints the curve and the best value") {
  TempDir tmp;
  write_corpus(tmp);
  REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                      tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                      kSmallModel,
                  tmp)
              .exit_code == 0);
  auto bs = run_cli("bias-search --model " + tmp.file("m.ckpt") + " --dev " +
                        tmp.file("dev.conll") + " --label O",
                    tmp);
  INFO(bs.output);
  REQUIRE(bs.exit_code == 0);
  // 11 curve lines plus one best line
  int curve_lines = 0;
  std::istringstream is(bs.output);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("bias ", 0) == 0) ++curve_lines;
  CHECK(curve_lines == 11);
  CHECK(bs.output.find("best ") != std::string::npos);

  auto bad = run_cli("bias-search --model " + tmp.file("m.ckpt") + " --dev " +
                         tmp.file("dev.conll") + " --label NOSUCH",
                     tmp);
  CHECK(bad.exit_code == 2);
}

TEST_CASE("cli: equal seeds produce byte-identical checkpoints, tags, reports") {
  TempDir tmp;
  write_corpus(tmp);
  for (const char* run : {"a", "b"}) {
    REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                        tmp.file("dev.conll") + " --out " +
                        tmp.file(std::string("m_") + run + ".ckpt") +
                        kSmallModel + " --set dropout=0.1",
                    tmp)
                .exit_code == 0);
    REQUIRE(run_cli("tag --model " + tmp.file(std::string("m_") + run + ".ckpt") +
                        " --input " + tmp.file("dev.conll") + " --output " +
                        tmp.file(std::string("t_") + run),
                    tmp)
                .exit_code == 0);
    std::string report =
        run_cli("eval --pred " + tmp.file(std::string("t_") + run) + " --gold " +
                    tmp.file("dev.conll"),
                tmp)
            .output;
    write_file(tmp.file(std::string("r_") + run), report);
  }
  CHECK(slurp(tmp.file("m_a.ckpt")) == slurp(tmp.file("m_b.ckpt")));
  CHECK(slurp(tmp.file("t_a")) == slurp(tmp.file("t_b")));
  CHECK(slurp(tmp.file("r_a")) == slurp(tmp.file("r_b")));
}

TEST_CASE("cli: categorized errors and exit codes") {
  TempDir tmp;
  write_corpus(tmp);
  auto usage = run_cli("eval --pred " + tmp.file("dev.conll") + " --gold " +
                           tmp.file("dev.conll") + " --set no_such_key=1",
                       tmp);
  CHECK(usage.exit_code == 2);
  CHECK(usage.output.find("error (usage)") != std::string::npos);

  auto data = run_cli("eval --pred /nonexistent.file --gold " +
                          tmp.file("dev.conll"),
                      tmp);
  CHECK(data.exit_code == 3);
  CHECK(data.output.find("error (data)") != std::string::npos);

  auto noargs = run_cli("tag", tmp);
  CHECK(noargs.exit_code != 0);
}

TEST_CASE("cli: config file plus overrides resolve and are emitted") {
  TempDir tmp;
  write_corpus(tmp);
  write_file(tmp.file("run.cfg"),
             "# comment\nword_hidden_dim = 6\nseed = 9\nepochs = 1\n"
             "char_emb_dim = 4\nchar_hidden_dim = 4\nword_emb_dim = 6\n"
             "stack_layers = 1\n");
  auto run = run_cli("train --config " + tmp.file("run.cfg") + " --train " +
                         tmp.file("train.conll") + " --dev " +
                         tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                         " --set epochs=2",
                     tmp);
  INFO(run.output);
  REQUIRE(run.exit_code == 0);
  CHECK(run.output.find("word_hidden_dim = 6") != std::string::npos);
  CHECK(run.output.find("epochs = 2") != std::string::npos);  // override wins
  CHECK(run.output.find("seed = 9") != std::string::npos);

  auto bad = run_cli("train --config /nonexistent.cfg --train " +
                         tmp.file("train.conll") + " --dev " +
                         tmp.file("dev.conll") + " --out " + tmp.file("x.ckpt"),
                     tmp);
  CHECK(bad.exit_code == 2);
}

TEST_CASE("cli: bias files round-trip byte-identically") {
  TempDir tmp;
  write_corpus(tmp);
  REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                      tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                      kSmallModel,
                  tmp)
              .exit_code == 0);
  auto loaded = load_checkpoint(tmp.file("m.ckpt"));
  BiasVector b = BiasVector::ones(loaded.model.vocab.num_labels());
  b.b[0] = 1.125;
  b.b[1] = 0.875;
  write_bias_file(tmp.file("b1.tsv"), b, loaded.model.vocab);
  auto reread = read_bias_file(tmp.file("b1.tsv"), loaded.model.vocab);
  write_bias_file(tmp.file("b2.tsv"), reread, loaded.model.vocab);
  CHECK(slurp(tmp.file("b1.tsv")) == slurp(tmp.file("b2.tsv")));

  // incomplete label coverage is rejected
  write_file(tmp.file("partial.tsv"), "O\t1.0\n");
  CHECK_THROWS_AS(read_bias_file(tmp.file("partial.tsv"), loaded.model.vocab),
                  DataError);
}

TEST_CASE("cli: aux sidecar vectors flow through train and tag") {
  TempDir tmp;
  auto corpus = oracle::make_synthetic_corpus(55, 10, 4);
  write_file(tmp.file("train.conll"), serialize_conll(corpus.train));
  write_file(tmp.file("dev.conll"), serialize_conll(corpus.dev));
  auto write_aux = [&](const std::string& name,
                       const std::vector<Sentence>& ss, int dim) {
    std::ostringstream os;
    os << "dim " << dim << "\n";
    for (const auto& s : ss) {
      for (int t = 0; t < s.size(); ++t) {
        for (int d = 0; d < dim; ++d) os << (d ? " " : "") << 0.1 * (t + d + 1);
        os << "\n";
      }
      os << "\n";
    }
    write_file(tmp.file(name), os.str());
  };
  write_aux("train.aux", corpus.train, 2);
  write_aux("dev.aux", corpus.dev, 2);

  auto train = run_cli(
      "train --train " + tmp.file("train.conll") + " --dev " +
          tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
          " --train-aux " + tmp.file("train.aux") + " --dev-aux " +
          tmp.file("dev.aux") + kSmallModel + " --set aux_dim=2 --set epochs=2",
      tmp);
  INFO(train.output);
  REQUIRE(train.exit_code == 0);

  auto tag = run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                         tmp.file("dev.conll") + " --output " + tmp.file("out") +
                         " --aux " + tmp.file("dev.aux"),
                     tmp);
  INFO(tag.output);
  REQUIRE(tag.exit_code == 0);

  // tagging without the sidecar the model was built for is a data error
  auto missing = run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                             tmp.file("dev.conll") + " --output " +
                             tmp.file("out2"),
                         tmp);
  CHECK(missing.exit_code == 3);

  // wrong dimension (structurally aligned) is a usage error
  write_aux("bad.aux", corpus.dev, 3);
  auto bad = run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                         tmp.file("dev.conll") + " --output " + tmp.file("out3") +
                         " --aux " + tmp.file("bad.aux"),
                     tmp);
  CHECK(bad.exit_code == 2);
}

TEST_CASE("cli: unknown words and -DOCSTART- are handled at tag time") {
  TempDir tmp;
  write_corpus(tmp);
  REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                      tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                      kSmallModel,
                  tmp)
              .exit_code == 0);
  write_file(tmp.file("oov.conll"),
             "-DOCSTART- O\n\nZanzibar O\nxylophone O\nanna O\n\n");
  auto tag = run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                         tmp.file("oov.conll") + " --output " + tmp.file("out"),
                     tmp);
  INFO(tag.output);
  REQUIRE(tag.exit_code == 0);
  std::string out = slurp(tmp.file("out"));
  CHECK(out.find("-DOCSTART-") == std::string::npos);
  CHECK(out.find("Zanzibar") != std::string::npos);

  auto sentences = parse_conll(out, 0, kLastColumn);
  REQUIRE(sentences.size() == 1);
  CHECK(sentences[0].size() == 3);
}

TEST_CASE("cli: significance of a system against itself is p = 1") {
  TempDir tmp;
  write_corpus(tmp);
  REQUIRE(run_cli("train --train " + tmp.file("train.conll") + " --dev " +
                      tmp.file("dev.conll") + " --out " + tmp.file("m.ckpt") +
                      kSmallModel,
                  tmp)
              .exit_code == 0);
  REQUIRE(run_cli("tag --model " + tmp.file("m.ckpt") + " --input " +
                      tmp.file("dev.conll") + " --output " + tmp.file("t"),
                  tmp)
              .exit_code == 0);
  auto sig = run_cli("significance --pred-a " + tmp.file("t") + " --pred-b " +
                         tmp.file("t") + " --gold " + tmp.file("dev.conll") +
                         " --set iterations=500",
                     tmp);
  INFO(sig.output);
  REQUIRE(sig.exit_code == 0);
  CHECK(sig.output.find("p_value: 1.000000") != std::string::npos);
}

TEST_CASE("config text round trips through emission") {
  RunConfig cfg;
  cfg.word_hidden_dim = 31;
  cfg.learning_rate = 0.0125;
  cfg.repair = true;
  cfg.scheme = "iobes";
  cfg.seed = 123456789;
  std::string text = emit_config(cfg);
  RunConfig back;
  apply_config_text(back, text);
  CHECK(emit_config(back) == text);

  RunConfig c2;
  CHECK_THROWS_AS(apply_config_text(c2, "bogus_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(c2, "epochs three\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(c2, "epochs = three\n"), ConfigError);
  CHECK_THROWS_AS(apply_override(c2, "no_equals"), ConfigError);
  CHECK_NOTHROW(apply_override(c2, "epochs=3"));
  CHECK(c2.epochs == 3);
}
