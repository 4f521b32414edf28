#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "seqtag/bias_opt.hpp"
#include "seqtag/corpus.hpp"
#include "seqtag/encoder.hpp"
#include "seqtag/train.hpp"

namespace seqtag {

// Every tunable of the toolkit in one flat structure. Unknown keys are
// errors; the resolved configuration plus the data files reproduce a run.
struct RunConfig {
  // corpus
  int word_column = 0;
  int label_column = -1;  // -1 = last column
  std::string scheme = "bio";
  bool repair = false;
  int min_word_freq = 1;
  std::string embeddings;  // optional pretrained embedding file
  // encoder
  int char_emb_dim = 25;
  int char_hidden_dim = 25;
  int word_emb_dim = 100;
  int word_hidden_dim = 100;
  int stack_layers = 3;
  int aux_dim = 0;
  // training
  double learning_rate = 0.005;
  double momentum = 0.9;
  double clip_norm = 5.0;
  int epochs = 100;
  int batch_size = 1;
  int patience = 10;
  double dropout = 0.0;
  uint64_t seed = 1;
  // bias training
  double bias_learning_rate = 0.005;
  int bias_max_updates = 200;
  int bias_patience = 50;
  double epsilon_min = 0.01;
  double epsilon_max = 0.10;
  double epsilon_step = 0.01;
  // decoding / evaluation
  bool constrain_decode = false;
  int iterations = 10000;

  Scheme input_scheme() const { return parse_scheme(scheme); }

  EncoderConfig encoder_config() const {
    EncoderConfig e;
    e.char_emb_dim = char_emb_dim;
    e.char_hidden_dim = char_hidden_dim;
    e.word_emb_dim = word_emb_dim;
    e.word_hidden_dim = word_hidden_dim;
    e.stack_layers = stack_layers;
    e.aux_dim = aux_dim;
    e.dropout_rate = dropout;
    e.validate();
    return e;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.momentum = momentum;
    t.clip_norm = clip_norm;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.patience = patience;
    t.dropout = dropout;
    t.seed = seed;
    t.validate();
    return t;
  }

  BiasTrainConfig bias_config() const {
    BiasTrainConfig b;
    b.learning_rate = bias_learning_rate;
    b.max_updates = bias_max_updates;
    b.patience = bias_patience;
    b.seed = seed;
    if (epsilon_min <= 0.0 || epsilon_step <= 0.0 || epsilon_max < epsilon_min)
      throw ConfigError("epsilon grid requires 0 < epsilon_min <= epsilon_max"
                        " and epsilon_step > 0");
    b.epsilon_grid.clear();
    for (int i = 0;; ++i) {
      double v = epsilon_min + i * epsilon_step;
      if (v > epsilon_max + epsilon_step / 2) break;
      b.epsilon_grid.push_back(v);
    }
    b.validate();
    return b;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

inline const std::vector<ConfigKey>& config_keys() {
  auto int_key = [](const char* name, int RunConfig::* field) {
    return ConfigKey{
        name,
        [name, field](RunConfig& c, const std::string& v) {
          c.*field = static_cast<int>(parse_int(name, v));
        },
        [field](const RunConfig& c) { return std::to_string(c.*field); }};
  };
  auto u64_key = [](const char* name, uint64_t RunConfig::* field) {
    return ConfigKey{
        name,
        [name, field](RunConfig& c, const std::string& v) {
          c.*field = static_cast<uint64_t>(parse_int(name, v));
        },
        [field](const RunConfig& c) { return std::to_string(c.*field); }};
  };
  auto dbl_key = [](const char* name, double RunConfig::* field) {
    return ConfigKey{
        name,
        [name, field](RunConfig& c, const std::string& v) {
          c.*field = parse_double(name, v);
        },
        [field](const RunConfig& c) { return format_double(c.*field); }};
  };
  auto bool_key = [](const char* name, bool RunConfig::* field) {
    return ConfigKey{
        name,
        [name, field](RunConfig& c, const std::string& v) {
          c.*field = parse_bool(name, v);
        },
        [field](const RunConfig& c) {
          return c.*field ? std::string("true") : std::string("false");
        }};
  };
  auto str_key = [](const char* name, std::string RunConfig::* field) {
    return ConfigKey{
        name,
        [field](RunConfig& c, const std::string& v) { c.*field = v; },
        [field](const RunConfig& c) { return c.*field; }};
  };
  static const std::vector<ConfigKey> keys = {
      int_key("word_column", &RunConfig::word_column),
      int_key("label_column", &RunConfig::label_column),
      str_key("scheme", &RunConfig::scheme),
      bool_key("repair", &RunConfig::repair),
      int_key("min_word_freq", &RunConfig::min_word_freq),
      str_key("embeddings", &RunConfig::embeddings),
      int_key("char_emb_dim", &RunConfig::char_emb_dim),
      int_key("char_hidden_dim", &RunConfig::char_hidden_dim),
      int_key("word_emb_dim", &RunConfig::word_emb_dim),
      int_key("word_hidden_dim", &RunConfig::word_hidden_dim),
      int_key("stack_layers", &RunConfig::stack_layers),
      int_key("aux_dim", &RunConfig::aux_dim),
      dbl_key("learning_rate", &RunConfig::learning_rate),
      dbl_key("momentum", &RunConfig::momentum),
      dbl_key("clip_norm", &RunConfig::clip_norm),
      int_key("epochs", &RunConfig::epochs),
      int_key("batch_size", &RunConfig::batch_size),
      int_key("patience", &RunConfig::patience),
      dbl_key("dropout", &RunConfig::dropout),
      u64_key("seed", &RunConfig::seed),
      dbl_key("bias_learning_rate", &RunConfig::bias_learning_rate),
      int_key("bias_max_updates", &RunConfig::bias_max_updates),
      int_key("bias_patience", &RunConfig::bias_patience),
      dbl_key("epsilon_min", &RunConfig::epsilon_min),
      dbl_key("epsilon_max", &RunConfig::epsilon_max),
      dbl_key("epsilon_step", &RunConfig::epsilon_step),
      bool_key("constrain_decode", &RunConfig::constrain_decode),
      int_key("iterations", &RunConfig::iterations),
  };
  return keys;
}

}  // namespace detail

inline void set_config_key(RunConfig& config, const std::string& key,
                           const std::string& value) {
  for (const auto& k : detail::config_keys())
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  throw ConfigError("unknown config key: '" + key + "'");
}

// "key = value" per assignment; blank lines and '#' comments allowed.
inline void apply_config_text(RunConfig& config, const std::string& text,
                              const std::string& origin = "config") {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ": line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    try {
      set_config_key(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": line " + std::to_string(line_no) + ": " +
                        e.what());
    }
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  RunConfig config;
  apply_config_text(config, ss.str(), path);
  return config;
}

// "key=value" command-line override.
inline void apply_override(RunConfig& config, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be key=value: '" + assignment + "'");
  set_config_key(config, detail::trim(assignment.substr(0, eq)),
                 detail::trim(assignment.substr(eq + 1)));
}

// Full key set in declaration order; parsing this text reproduces the config.
inline std::string emit_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : detail::config_keys())
    out += k.name + " = " + k.get(config) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Bias file: one "LABEL<TAB>value" line per real label. The label set must
// exactly cover the model's real labels.

inline void write_bias_file(const std::string& path, const BiasVector& bias,
                            const Vocabulary& vocab) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open for writing: " + path);
  for (int y = 0; y < vocab.num_real_labels(); ++y)
    f << vocab.labels[static_cast<size_t>(y)] << '\t'
      << detail::format_double(bias.b[y]) << '\n';
  if (!f) throw DataError("write failed: " + path);
}

inline BiasVector read_bias_file(const std::string& path,
                                 const Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open bias file: " + path);
  BiasVector bias = BiasVector::ones(vocab.num_labels());
  std::vector<bool> seen(static_cast<size_t>(vocab.num_real_labels()), false);
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": expected LABEL<TAB>value");
    std::string label = line.substr(0, tab);
    auto it = vocab.label_ids.find(label);
    if (it == vocab.label_ids.end() || it->second >= vocab.num_real_labels())
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": label '" + label + "' is not a real label of the model");
    if (seen[static_cast<size_t>(it->second)])
      throw DataError(path + ": line " + std::to_string(line_no) +
                      ": duplicate label '" + label + "'");
    seen[static_cast<size_t>(it->second)] = true;
    bias.b[it->second] =
        detail::parse_double("bias:" + label, detail::trim(line.substr(tab + 1)));
  }
  for (int y = 0; y < vocab.num_real_labels(); ++y)
    if (!seen[static_cast<size_t>(y)])
      throw DataError(path + ": missing bias for label '" +
                      vocab.labels[static_cast<size_t>(y)] + "'");
  bias.validate();
  return bias;
}

}  // namespace seqtag
