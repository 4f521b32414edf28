#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqtag/array.hpp"
#include "seqtag/errors.hpp"
#include "seqtag/rng.hpp"

namespace seqtag {

enum class Scheme { IOB1, BIO, IOBES };

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::IOB1: return "iob1";
    case Scheme::BIO: return "bio";
    case Scheme::IOBES: return "iobes";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "iob1" || s == "IOB1") return Scheme::IOB1;
  if (s == "bio" || s == "BIO" || s == "iob2" || s == "IOB2") return Scheme::BIO;
  if (s == "iobes" || s == "IOBES") return Scheme::IOBES;
  throw ConfigError("unknown tagging scheme: " + s);
}

inline std::string ascii_lower(std::string s) {
  for (char& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
  return s;
}

inline std::vector<uint32_t> decode_utf8(const std::string& s) {
  std::vector<uint32_t> out;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char b = static_cast<unsigned char>(s[i]);
    uint32_t cp = 0;
    int extra = 0;
    if (b < 0x80) {
      cp = b;
    } else if ((b >> 5) == 0x6) {
      cp = b & 0x1f;
      extra = 1;
    } else if ((b >> 4) == 0xe) {
      cp = b & 0x0f;
      extra = 2;
    } else if ((b >> 3) == 0x1e) {
      cp = b & 0x07;
      extra = 3;
    } else {
      throw DataError("invalid UTF-8 byte in token: " + s);
    }
    if (i + extra >= s.size())
      throw DataError("truncated UTF-8 sequence in token: " + s);
    for (int k = 1; k <= extra; ++k) {
      unsigned char c = static_cast<unsigned char>(s[i + k]);
      if ((c >> 6) != 0x2)
        throw DataError("invalid UTF-8 continuation in token: " + s);
      cp = (cp << 6) | (c & 0x3f);
    }
    out.push_back(cp);
    i += 1 + extra;
  }
  return out;
}

struct Sentence {
  std::vector<std::string> words;
  std::vector<std::vector<uint32_t>> chars;  // unicode scalars, one list per word
  std::vector<std::string> labels;           // raw label strings; empty if unlabeled

  int size() const { return static_cast<int>(words.size()); }
  bool labeled() const { return !labels.empty(); }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

inline Sentence make_sentence(std::vector<std::string> words,
                              std::vector<std::string> labels = {}) {
  Sentence s;
  s.words = std::move(words);
  s.labels = std::move(labels);
  for (const auto& w : s.words) s.chars.push_back(decode_utf8(w));
  return s;
}

// Column indices for parse_conll.
inline constexpr int kLastColumn = -1;  // label is the final field on each line
inline constexpr int kNoLabels = -2;    // file carries no labels

// Parsed file plus the raw token lines of each kept sentence, so output
// formats can append a column without losing the original fields.
struct ParsedConll {
  std::vector<Sentence> sentences;
  std::vector<std::vector<std::string>> raw_lines;
};

inline ParsedConll parse_conll_keep_raw(const std::string& text,
                                        int word_column = 0,
                                        int label_column = kLastColumn) {
  ParsedConll out;
  Sentence cur;
  std::vector<std::string> cur_raw;
  bool cur_is_docstart = false;

  auto flush = [&]() {
    if (!cur.words.empty() && !cur_is_docstart) {
      out.sentences.push_back(std::move(cur));
      out.raw_lines.push_back(std::move(cur_raw));
    }
    cur = Sentence();
    cur_raw.clear();
    cur_is_docstart = false;
  };

  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string f;
    while (ls >> f) fields.push_back(f);
    if (fields.empty()) {
      flush();
      continue;
    }
    int need = word_column;
    if (label_column >= 0) need = std::max(need, label_column);
    if (static_cast<int>(fields.size()) <= need)
      throw DataError("line " + std::to_string(line_no) + ": expected at least " +
                      std::to_string(need + 1) + " columns, got " +
                      std::to_string(fields.size()));
    const std::string& word = fields[word_column];
    if (cur.words.empty() && word == "-DOCSTART-") cur_is_docstart = true;
    cur.words.push_back(word);
    cur.chars.push_back(decode_utf8(word));
    if (label_column != kNoLabels) {
      int lc = label_column == kLastColumn ? static_cast<int>(fields.size()) - 1
                                           : label_column;
      cur.labels.push_back(fields[lc]);
    }
    cur_raw.push_back(line);
  }
  flush();
  return out;
}

inline std::vector<Sentence> parse_conll(const std::string& text,
                                         int word_column = 0,
                                         int label_column = kLastColumn) {
  return parse_conll_keep_raw(text, word_column, label_column).sentences;
}

inline std::string serialize_conll(const std::vector<Sentence>& sentences) {
  std::ostringstream os;
  for (const auto& s : sentences) {
    for (int i = 0; i < s.size(); ++i) {
      os << s.words[i];
      if (s.labeled()) os << ' ' << s.labels[i];
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Tagging schemes and entity spans

struct EntitySpan {
  int start = 0;  // inclusive
  int end = 0;    // inclusive
  std::string type;
  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
  friend auto operator<=>(const EntitySpan&, const EntitySpan&) = default;
};

namespace detail {

struct LabelParts {
  char tag = 'O';    // one of O B I E S
  std::string type;  // empty for O
};

inline LabelParts split_label(const std::string& label) {
  LabelParts p;
  if (label == "O") return p;
  if (label.size() >= 3 && label[1] == '-' &&
      (label[0] == 'B' || label[0] == 'I' || label[0] == 'E' || label[0] == 'S')) {
    p.tag = label[0];
    p.type = label.substr(2);
    return p;
  }
  throw DataError("malformed label string: '" + label + "'");
}

inline bool tag_allowed(Scheme scheme, char tag) {
  switch (scheme) {
    case Scheme::IOB1:
    case Scheme::BIO: return tag == 'O' || tag == 'B' || tag == 'I';
    case Scheme::IOBES:
      return tag == 'O' || tag == 'B' || tag == 'I' || tag == 'E' || tag == 'S';
  }
  return false;
}

}  // namespace detail

// Best-effort span reading shared by repair and evaluation: any B/S starts an
// entity, I/E continue a same-typed open entity or start one, E and any
// non-continuation close. On scheme-valid input this is the exact reading.
inline std::vector<EntitySpan> extract_entities_lenient(
    const std::vector<std::string>& labels) {
  std::vector<EntitySpan> spans;
  int open_start = -1;
  std::string open_type;
  auto close = [&](int end) {
    if (open_start >= 0) spans.push_back({open_start, end, open_type});
    open_start = -1;
    open_type.clear();
  };
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) {
    auto p = detail::split_label(labels[i]);
    switch (p.tag) {
      case 'O':
        close(i - 1);
        break;
      case 'B':
        close(i - 1);
        open_start = i;
        open_type = p.type;
        break;
      case 'S':
        close(i - 1);
        spans.push_back({i, i, p.type});
        break;
      case 'I':
        if (open_start < 0 || open_type != p.type) {
          close(i - 1);
          open_start = i;
          open_type = p.type;
        }
        break;
      case 'E':
        if (open_start >= 0 && open_type == p.type) {
          close(i);
        } else {
          close(i - 1);
          spans.push_back({i, i, p.type});
        }
        break;
    }
  }
  close(static_cast<int>(labels.size()) - 1);
  return spans;
}

// Strict validation under the declared scheme. `where` names the sentence in
// error messages.
inline void validate_labels(const std::vector<std::string>& labels,
                            Scheme scheme, const std::string& where = "") {
  std::string ctx = where.empty() ? "" : where + ": ";
  int n = static_cast<int>(labels.size());
  std::string open_type;  // IOBES open entity
  for (int i = 0; i < n; ++i) {
    detail::LabelParts p;
    try {
      p = detail::split_label(labels[i]);
    } catch (const DataError& e) {
      throw DataError(ctx + "position " + std::to_string(i) + ": " + e.what());
    }
    if (!detail::tag_allowed(scheme, p.tag))
      throw DataError(ctx + "position " + std::to_string(i) + ": tag '" +
                      labels[i] + "' not valid under scheme " +
                      to_string(scheme));
    auto fail = [&](const std::string& msg) {
      throw DataError(ctx + "position " + std::to_string(i) + ": " + msg +
                      " (label '" + labels[i] + "')");
    };
    switch (scheme) {
      case Scheme::BIO: {
        if (p.tag == 'I') {
          if (i == 0) fail("I- at sentence start");
          auto prev = detail::split_label(labels[i - 1]);
          if ((prev.tag != 'B' && prev.tag != 'I') || prev.type != p.type)
            fail("I- without preceding B-/I- of the same type");
        }
        break;
      }
      case Scheme::IOB1: {
        if (p.tag == 'B') {
          // B- only separates adjacent same-type entities
          if (i == 0) fail("B- at sentence start under IOB1");
          auto prev = detail::split_label(labels[i - 1]);
          if ((prev.tag != 'B' && prev.tag != 'I') || prev.type != p.type)
            fail("B- not preceded by a same-type entity under IOB1");
        }
        break;
      }
      case Scheme::IOBES: {
        if (p.tag == 'O' || p.tag == 'B' || p.tag == 'S') {
          if (!open_type.empty()) fail("unterminated entity before this label");
        }
        if (p.tag == 'B') {
          open_type = p.type;
        } else if (p.tag == 'I' || p.tag == 'E') {
          if (open_type != p.type)
            fail(std::string(1, p.tag) + "- without matching open entity");
          if (p.tag == 'E') open_type.clear();
        }
        break;
      }
    }
  }
  if (scheme == Scheme::IOBES && !open_type.empty())
    throw DataError(ctx + "unterminated entity at sentence end");
}

// Re-emit spans as labels under the target scheme.
inline std::vector<std::string> emit_labels(const std::vector<EntitySpan>& spans,
                                            int length, Scheme scheme) {
  std::vector<std::string> out(static_cast<size_t>(length), "O");
  const EntitySpan* prev = nullptr;
  for (const auto& sp : spans) {
    switch (scheme) {
      case Scheme::BIO:
        out[sp.start] = "B-" + sp.type;
        for (int i = sp.start + 1; i <= sp.end; ++i) out[i] = "I-" + sp.type;
        break;
      case Scheme::IOBES:
        if (sp.start == sp.end) {
          out[sp.start] = "S-" + sp.type;
        } else {
          out[sp.start] = "B-" + sp.type;
          for (int i = sp.start + 1; i < sp.end; ++i) out[i] = "I-" + sp.type;
          out[sp.end] = "E-" + sp.type;
        }
        break;
      case Scheme::IOB1: {
        bool adjacent_same =
            prev && prev->end == sp.start - 1 && prev->type == sp.type;
        out[sp.start] = (adjacent_same ? "B-" : "I-") + sp.type;
        for (int i = sp.start + 1; i <= sp.end; ++i) out[i] = "I-" + sp.type;
        break;
      }
    }
    prev = &sp;
  }
  return out;
}

// Conventional fix for invalid sequences (orphan I-X becomes B-X and so on):
// read spans leniently, then re-emit under the same scheme.
inline std::vector<std::string> repair_labels(const std::vector<std::string>& labels,
                                              Scheme scheme) {
  return emit_labels(extract_entities_lenient(labels),
                     static_cast<int>(labels.size()), scheme);
}

inline std::vector<EntitySpan> extract_entities(
    const std::vector<std::string>& labels, Scheme scheme) {
  validate_labels(labels, scheme);
  return extract_entities_lenient(labels);
}

inline std::vector<std::string> convert_scheme(
    const std::vector<std::string>& labels, Scheme from, Scheme to) {
  validate_labels(labels, from);
  return emit_labels(extract_entities_lenient(labels),
                     static_cast<int>(labels.size()), to);
}

// Validate (or repair) every sentence and convert labels to the internal
// canonical scheme, BIO. Unlabeled sentences pass through.
inline void normalize_to_bio(std::vector<Sentence>& sentences, Scheme from,
                             bool repair) {
  for (size_t k = 0; k < sentences.size(); ++k) {
    auto& s = sentences[k];
    if (!s.labeled()) continue;
    if (repair) {
      s.labels = repair_labels(s.labels, from);
    } else {
      validate_labels(s.labels, from, "sentence " + std::to_string(k));
    }
    s.labels = emit_labels(extract_entities_lenient(s.labels), s.size(),
                           Scheme::BIO);
  }
}

// ---------------------------------------------------------------------------
// Vocabulary

struct Vocabulary {
  static constexpr const char* kUnkWord = "<unk>";
  static constexpr const char* kBeginLabel = "<s>";
  static constexpr const char* kEndLabel = "</s>";

  std::vector<std::string> words;  // id 0 = UNK; entries are lowercased
  std::vector<uint32_t> chars;     // id 0 = PAD
  std::vector<std::string> labels; // real labels, then begin, then end
  std::unordered_map<std::string, int> word_ids;
  std::unordered_map<uint32_t, int> char_ids;
  std::unordered_map<std::string, int> label_ids;
  Scheme scheme = Scheme::BIO;

  int num_words() const { return static_cast<int>(words.size()); }
  int num_chars() const { return static_cast<int>(chars.size()); }
  int num_labels() const { return static_cast<int>(labels.size()); }
  int num_real_labels() const { return num_labels() - 2; }
  int begin_label() const { return num_real_labels(); }
  int end_label() const { return num_real_labels() + 1; }

  // Lowercased lookup with UNK fallback (original case feeds the char channel).
  int word_id(const std::string& w) const {
    auto it = word_ids.find(ascii_lower(w));
    return it == word_ids.end() ? 0 : it->second;
  }

  int char_id(uint32_t cp) const {
    auto it = char_ids.find(cp);
    return it == char_ids.end() ? 0 : it->second;
  }

  int label_id(const std::string& l) const {
    auto it = label_ids.find(l);
    if (it == label_ids.end()) throw DataError("label not in vocabulary: " + l);
    return it->second;
  }

  std::vector<int> word_id_seq(const Sentence& s) const {
    std::vector<int> ids;
    ids.reserve(s.words.size());
    for (const auto& w : s.words) ids.push_back(word_id(w));
    return ids;
  }

  std::vector<std::vector<int>> char_id_seqs(const Sentence& s) const {
    std::vector<std::vector<int>> out;
    out.reserve(s.chars.size());
    for (const auto& cs : s.chars) {
      std::vector<int> ids;
      ids.reserve(cs.size());
      for (uint32_t c : cs) ids.push_back(char_id(c));
      out.push_back(std::move(ids));
    }
    return out;
  }

  std::vector<int> label_id_seq(const Sentence& s) const {
    std::vector<int> ids;
    ids.reserve(s.labels.size());
    for (const auto& l : s.labels) ids.push_back(label_id(l));
    return ids;
  }

  std::vector<std::string> label_strings(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(labels.at(static_cast<size_t>(id)));
    return out;
  }
};

inline Vocabulary build_vocabulary(const std::vector<Sentence>& sentences,
                                   int min_word_freq, Scheme scheme) {
  if (sentences.empty()) throw DataError("build_vocabulary: no sentences");
  Vocabulary v;
  v.scheme = scheme;
  v.words.push_back(Vocabulary::kUnkWord);
  v.word_ids[Vocabulary::kUnkWord] = 0;
  v.chars.push_back(0);  // PAD codepoint
  v.char_ids[0] = 0;

  std::unordered_map<std::string, int> freq;
  std::vector<std::string> word_order;
  for (size_t k = 0; k < sentences.size(); ++k) {
    const auto& s = sentences[k];
    if (s.labeled())
      validate_labels(s.labels, scheme, "sentence " + std::to_string(k));
    for (const auto& w : s.words) {
      std::string lw = ascii_lower(w);
      if (freq[lw]++ == 0) word_order.push_back(lw);
    }
    for (const auto& cs : s.chars)
      for (uint32_t c : cs)
        if (!v.char_ids.count(c)) {
          v.char_ids[c] = v.num_chars();
          v.chars.push_back(c);
        }
    for (const auto& l : s.labels)
      if (!v.label_ids.count(l)) {
        v.label_ids[l] = static_cast<int>(v.labels.size());
        v.labels.push_back(l);
      }
  }
  for (const auto& w : word_order)
    if (freq[w] >= min_word_freq) {
      v.word_ids[w] = v.num_words();
      v.words.push_back(w);
    }
  v.label_ids[Vocabulary::kBeginLabel] = static_cast<int>(v.labels.size());
  v.labels.push_back(Vocabulary::kBeginLabel);
  v.label_ids[Vocabulary::kEndLabel] = static_cast<int>(v.labels.size());
  v.labels.push_back(Vocabulary::kEndLabel);
  return v;
}

// ---------------------------------------------------------------------------
// Pretrained embeddings (GloVe-style text: token then dim floats per line)

struct EmbeddingTable {
  int dim = 0;
  Array vectors;              // |words| x dim
  std::vector<bool> covered;  // per vocab row
  int covered_rows = 0;
  double coverage = 0.0;      // fraction of vocab rows initialized from file
};

inline EmbeddingTable load_embeddings_text(const std::string& text,
                                           const Vocabulary& vocab, Rng& rng,
                                           const std::string& origin = "embeddings") {
  EmbeddingTable table;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  std::vector<std::pair<int, std::vector<double>>> hits;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (vals.empty())
      throw DataError(origin + ": line " + std::to_string(line_no) +
                      ": no vector values");
    if (table.dim == 0) table.dim = static_cast<int>(vals.size());
    if (static_cast<int>(vals.size()) != table.dim)
      throw DataError(origin + ": line " + std::to_string(line_no) +
                      ": expected " + std::to_string(table.dim) +
                      " values, got " + std::to_string(vals.size()));
    auto it = vocab.word_ids.find(ascii_lower(token));
    if (it != vocab.word_ids.end()) hits.emplace_back(it->second, std::move(vals));
  }
  if (table.dim == 0) throw DataError(origin + ": no vectors found");
  table.vectors = Array({vocab.num_words(), table.dim});
  table.covered.assign(static_cast<size_t>(vocab.num_words()), false);
  for (auto& [row, vals] : hits) {
    if (table.covered[static_cast<size_t>(row)]) continue;  // first line wins
    for (int j = 0; j < table.dim; ++j) table.vectors(row, j) = vals[static_cast<size_t>(j)];
    table.covered[static_cast<size_t>(row)] = true;
    ++table.covered_rows;
  }
  for (int r = 0; r < vocab.num_words(); ++r)
    if (!table.covered[static_cast<size_t>(r)]) init_embedding_row(rng, table.vectors, r);
  table.coverage = static_cast<double>(table.covered_rows) / vocab.num_words();
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path,
                                      const Vocabulary& vocab, Rng& rng) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open embedding file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_embeddings_text(ss.str(), vocab, rng, path);
}

// ---------------------------------------------------------------------------
// Auxiliary per-token feature vectors (sidecar file).
// Format: header line "dim D"; then one line of D floats per token, with a
// blank line between sentences. Blocks align 1:1 with the parsed sentences.

struct AuxFeatures {
  int dim = 0;
  std::vector<Array> per_sentence;  // each n_i x dim
};

inline AuxFeatures load_aux_features_text(const std::string& text,
                                          const std::vector<Sentence>& corpus,
                                          const std::string& origin = "aux") {
  AuxFeatures aux;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) throw DataError(origin + ": empty file");
  ++line_no;
  {
    std::istringstream hs(line);
    std::string kw;
    hs >> kw >> aux.dim;
    if (kw != "dim" || aux.dim <= 0)
      throw DataError(origin + ": first line must be 'dim <D>'");
  }
  std::vector<std::vector<double>> block;
  auto flush = [&]() {
    if (block.empty()) return;
    Array m({static_cast<int>(block.size()), aux.dim});
    for (size_t i = 0; i < block.size(); ++i)
      for (int j = 0; j < aux.dim; ++j) m(static_cast<int>(i), j) = block[i][static_cast<size_t>(j)];
    aux.per_sentence.push_back(std::move(m));
    block.clear();
  };
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<double> vals;
    double x;
    while (ls >> x) vals.push_back(x);
    if (vals.empty()) {
      flush();
      continue;
    }
    if (static_cast<int>(vals.size()) != aux.dim)
      throw DataError(origin + ": line " + std::to_string(line_no) +
                      ": expected " + std::to_string(aux.dim) +
                      " values, got " + std::to_string(vals.size()));
    block.push_back(std::move(vals));
  }
  flush();
  if (aux.per_sentence.size() != corpus.size())
    throw DataError(origin + ": " + std::to_string(aux.per_sentence.size()) +
                    " blocks for " + std::to_string(corpus.size()) +
                    " sentences");
  for (size_t i = 0; i < corpus.size(); ++i)
    if (aux.per_sentence[i].rows() != corpus[i].size())
      throw DataError(origin + ": sentence " + std::to_string(i) + " has " +
                      std::to_string(corpus[i].size()) + " tokens but " +
                      std::to_string(aux.per_sentence[i].rows()) +
                      " aux rows");
  return aux;
}

inline AuxFeatures load_aux_features(const std::string& path,
                                     const std::vector<Sentence>& corpus) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open aux feature file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_aux_features_text(ss.str(), corpus, path);
}

}  // namespace seqtag
