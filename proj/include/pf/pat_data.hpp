#pragma once

// Palette-and-Text records: ingestion, tokenization, vocabulary, word
// embeddings, train/test splitting and batching.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pf/color.hpp"
#include "pf/tensor.hpp"

namespace pf {

inline constexpr int kEmbeddingDim = 300;
inline constexpr double kOovEmbeddingStd = 0.05;

struct PatRecord {
  std::string text;
  Palette palette;
};

// Newline-delimited JSON, one {"text": ..., "palette": [[L,a,b] x5]} per
// line. Blank lines are skipped. Throws ParseError naming the 1-based line.
std::vector<PatRecord> read_pat(std::istream& in);
std::vector<PatRecord> load_pat(const std::filesystem::path& path);
std::string pat_line(const PatRecord& record);
void write_pat(const std::vector<PatRecord>& records, std::ostream& out);
void save_pat(const std::vector<PatRecord>& records, const std::filesystem::path& path);

// Lowercases, drops apostrophes, turns other punctuation into separators
// (hyphens between word characters are kept) and splits on whitespace.
// Throws InvalidInput when nothing is left.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr std::string_view kPadToken = "<pad>";

  Vocabulary();
  // `tokens` must start with the PAD token and contain no duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);
  // PAD followed by the distinct tokens of all records in sorted order.
  static Vocabulary build(const std::vector<PatRecord>& records);

  std::size_t size() const { return tokens_.size(); }
  // -1 when the token is not in the vocabulary.
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct EmbeddingTable {
  Tensor matrix;               // [|V|, dim]
  std::size_t from_file = 0;   // rows copied from the embedding file
};

// word2vec text layout: optional "<count> <dim>" header, then one token and
// `dim` floats per line. Vocabulary tokens missing from the file are drawn
// from N(0, 0.05^2); PAD is all zero. Throws ParseError naming the line.
EmbeddingTable load_embeddings(const Vocabulary& vocab, const std::filesystem::path& path, std::uint64_t seed,
                               int dim = kEmbeddingDim);
EmbeddingTable read_embeddings(const Vocabulary& vocab, std::istream& in, std::uint64_t seed,
                               int dim = kEmbeddingDim);
// No file: every non-PAD row is drawn from N(0, 0.05^2).
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::uint64_t seed, int dim = kEmbeddingDim);

struct DataSplit {
  std::vector<PatRecord> train;
  std::vector<PatRecord> test;
};

// 992 held out at full dataset scale (>= 9921 records), otherwise ceil(10%).
std::size_t test_size_for(std::size_t record_count);
DataSplit split(const std::vector<PatRecord>& records, std::uint64_t seed);

// Token ids of one text; tokens missing from the vocabulary map to PAD (a
// zero vector) and are reported in `unknown`.
struct EncodedText {
  std::vector<std::string> tokens;
  std::vector<int> ids;
  std::vector<std::string> unknown;
};
EncodedText encode_text(std::string_view text, const Vocabulary& vocab);

struct Batch {
  std::vector<std::size_t> indices;     // positions in the source record list
  std::vector<std::vector<int>> ids;    // [B][T], PAD-filled past each row's length
  std::vector<int> lengths;             // pre-padding token counts
  Tensor mask;                          // [B, T], 1 for real tokens
  Tensor vectors;                       // [B, T, dim] when embeddings were supplied, else empty
  Tensor palettes;                      // [B, 15] raw Lab, color-major
  int batch_size() const { return static_cast<int>(ids.size()); }
  int max_len() const { return mask.rank() == 2 ? mask.dim(1) : 0; }
};

// Single-consumer stream of batches over one shuffled pass of the records.
class BatchStream {
 public:
  BatchStream(const std::vector<PatRecord>& records, int batch_size, const Vocabulary& vocab,
              const Tensor* embeddings, std::uint64_t seed, bool shuffle = true);
  std::optional<Batch> next();
  std::size_t batch_count() const;

 private:
  const std::vector<PatRecord>& records_;
  int batch_size_;
  const Vocabulary& vocab_;
  const Tensor* embeddings_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<int>> encoded_;
  std::size_t cursor_ = 0;
};

}  // namespace pf
