#pragma once

// Checkpoint container, format version 1. All integers and doubles are
// little-endian, doubles are raw IEEE-754 bits.
//
//   "SQTG"                magic, 4 bytes
//   u32  version          = 1
//   u32  scheme           0 = iob1, 1 = bio, 2 = iobes
//   i32  char_emb_dim, char_hidden_dim, word_emb_dim, word_hidden_dim,
//        stack_layers, aux_dim
//   f64  dropout_rate
//   f64  dev_f1           dev F1 at save time
//   u64  num_words, num_chars, num_labels
//   words   num_words  x (u32 length + UTF-8 bytes)
//   chars   num_chars  x u32 codepoint
//   labels  num_labels x (u32 length + UTF-8 bytes), includes begin/end
//   arrays  in for_each_param order: u32 ndim, u32 dims[ndim], f64 data[...]
//
// Loading validates the magic, version, and the shape of every array.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "seqtag/model.hpp"

namespace seqtag {

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian platform");

namespace detail {

inline constexpr char kCheckpointMagic[4] = {'S', 'Q', 'T', 'G'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Writer {
  std::ofstream out;

  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw DataError("cannot open for writing: " + path);
  }
  void bytes(const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void i32(int32_t v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  std::ifstream in;
  std::string path;

  explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw DataError("cannot open checkpoint: " + p);
  }
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
      throw DataError("checkpoint truncated: " + path);
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  int32_t i32() {
    int32_t v;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::string str() {
    uint32_t n = u32();
    if (n > (1u << 20)) throw DataError("checkpoint corrupt: " + path);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TaggerModel& model,
                            double dev_f1) {
  detail::Writer w(path);
  w.bytes(detail::kCheckpointMagic, 4);
  w.u32(detail::kCheckpointVersion);
  w.u32(static_cast<uint32_t>(model.vocab.scheme));
  w.i32(model.config.char_emb_dim);
  w.i32(model.config.char_hidden_dim);
  w.i32(model.config.word_emb_dim);
  w.i32(model.config.word_hidden_dim);
  w.i32(model.config.stack_layers);
  w.i32(model.config.aux_dim);
  w.f64(model.config.dropout_rate);
  w.f64(dev_f1);
  w.u64(static_cast<uint64_t>(model.vocab.num_words()));
  w.u64(static_cast<uint64_t>(model.vocab.num_chars()));
  w.u64(static_cast<uint64_t>(model.vocab.num_labels()));
  for (const auto& word : model.vocab.words) w.str(word);
  for (uint32_t cp : model.vocab.chars) w.u32(cp);
  for (const auto& label : model.vocab.labels) w.str(label);
  auto& params = const_cast<TaggerModel&>(model).params;
  for_each_param(params, [&](const std::string&, Param& p) {
    w.u32(static_cast<uint32_t>(p.value.ndim()));
    for (int d : p.value.shape) w.u32(static_cast<uint32_t>(d));
    w.bytes(p.value.data.data(), p.value.data.size() * sizeof(double));
  });
  if (!w.out) throw DataError("write failed: " + path);
}

struct LoadedCheckpoint {
  TaggerModel model;
  double dev_f1 = 0.0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  detail::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, detail::kCheckpointMagic, 4) != 0)
    throw DataError("not a seqtag checkpoint (bad magic): " + path);
  uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion)
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version) + ": " + path);

  Vocabulary vocab;
  uint32_t scheme = r.u32();
  if (scheme > 2) throw DataError("checkpoint corrupt (scheme): " + path);
  vocab.scheme = static_cast<Scheme>(scheme);
  EncoderConfig config;
  config.char_emb_dim = r.i32();
  config.char_hidden_dim = r.i32();
  config.word_emb_dim = r.i32();
  config.word_hidden_dim = r.i32();
  config.stack_layers = r.i32();
  config.aux_dim = r.i32();
  config.dropout_rate = r.f64();
  LoadedCheckpoint loaded;
  loaded.dev_f1 = r.f64();
  uint64_t num_words = r.u64();
  uint64_t num_chars = r.u64();
  uint64_t num_labels = r.u64();
  if (num_labels < 3) throw DataError("checkpoint corrupt (labels): " + path);
  for (uint64_t i = 0; i < num_words; ++i) {
    vocab.words.push_back(r.str());
    vocab.word_ids[vocab.words.back()] = static_cast<int>(i);
  }
  for (uint64_t i = 0; i < num_chars; ++i) {
    vocab.chars.push_back(r.u32());
    vocab.char_ids[vocab.chars.back()] = static_cast<int>(i);
  }
  for (uint64_t i = 0; i < num_labels; ++i) {
    vocab.labels.push_back(r.str());
    vocab.label_ids[vocab.labels.back()] = static_cast<int>(i);
  }

  Rng structural_rng(0);
  loaded.model = TaggerModel::init(std::move(vocab), config, structural_rng);
  for_each_param(loaded.model.params, [&](const std::string& name, Param& p) {
    uint32_t ndim = r.u32();
    if (ndim != static_cast<uint32_t>(p.value.ndim()))
      throw DataError("checkpoint array '" + name + "' has rank " +
                      std::to_string(ndim) + ", expected " +
                      std::to_string(p.value.ndim()) + ": " + path);
    for (int d = 0; d < p.value.ndim(); ++d) {
      uint32_t extent = r.u32();
      if (extent != static_cast<uint32_t>(p.value.shape[static_cast<size_t>(d)]))
        throw DataError("checkpoint array '" + name + "' dim " +
                        std::to_string(d) + " is " + std::to_string(extent) +
                        ", expected " +
                        std::to_string(p.value.shape[static_cast<size_t>(d)]) +
                        ": " + path);
    }
    r.bytes(p.value.data.data(), p.value.data.size() * sizeof(double));
  });
  return loaded;
}

}  // namespace seqtag
