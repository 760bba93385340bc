#include "pf/pat_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pf/error.hpp"

namespace pf {
namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

PatRecord parse_record(const std::string& line, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
  }
  if (!j.is_object() || !j.contains("text") || !j.at("text").is_string())
    throw ParseError("record needs a string \"text\" field", lineno);
  if (!j.contains("palette")) throw ParseError("record needs a \"palette\" field", lineno);
  PatRecord rec;
  rec.text = j.at("text").get<std::string>();
  try {
    tokenize(rec.text);
    rec.palette = palette_from_json(j.at("palette"));
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), lineno);
  }
  return rec;
}

}  // namespace

std::vector<PatRecord> read_pat(std::istream& in) {
  std::vector<PatRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    out.push_back(parse_record(line, lineno));
  }
  return out;
}

std::vector<PatRecord> load_pat(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open PAT file " + path.string());
  return read_pat(in);
}

std::string pat_line(const PatRecord& record) {
  nlohmann::ordered_json j;
  j["text"] = record.text;
  nlohmann::ordered_json colors = nlohmann::ordered_json::array();
  for (const auto& c : record.palette.colors()) colors.push_back({c.L, c.a, c.b});
  j["palette"] = std::move(colors);
  return j.dump();
}

void write_pat(const std::vector<PatRecord>& records, std::ostream& out) {
  for (const auto& r : records) out << pat_line(r) << '\n';
}

void save_pat(const std::vector<PatRecord>& records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_pat(records, out);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_byte(c)) {
      cleaned.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    } else if (c == '\'') {
      // dropped: "autumn's" -> "autumns"
    } else if (c == '-' && i > 0 && i + 1 < text.size() && is_word_byte(static_cast<unsigned char>(text[i - 1])) &&
               is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      cleaned.push_back('-');
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::istringstream ss(cleaned);
  for (std::string tok; ss >> tok;) tokens.push_back(std::move(tok));
  if (tokens.empty()) throw InvalidInput("text \"" + std::string(text) + "\" has no tokens after normalization");
  return tokens;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{std::string(kPadToken)}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_[0] != kPadToken) throw InvalidInput("vocabulary must start with the PAD token");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw InvalidInput("duplicate vocabulary token \"" + tokens_[i] + "\"");
}

Vocabulary Vocabulary::build(const std::vector<PatRecord>& records) {
  std::set<std::string> distinct;
  for (const auto& r : records)
    for (auto& t : tokenize(r.text)) distinct.insert(std::move(t));
  distinct.erase(std::string(kPadToken));
  std::vector<std::string> tokens{std::string(kPadToken)};
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::uint64_t seed, int dim) {
  EmbeddingTable out{Tensor({static_cast<int>(vocab.size()), dim}), 0};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kOovEmbeddingStd);
  for (std::size_t r = 1; r < vocab.size(); ++r)
    for (int j = 0; j < dim; ++j) out.matrix.at(static_cast<int>(r), j) = normal(rng);
  return out;
}

EmbeddingTable read_embeddings(const Vocabulary& vocab, std::istream& in, std::uint64_t seed, int dim) {
  // Start from the random fill so OOV rows do not depend on file contents.
  EmbeddingTable out = random_embeddings(vocab, seed, dim);
  std::vector<bool> seen(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  std::vector<double> values(static_cast<std::size_t>(dim));
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<std::string> fields;
    for (std::string f; ss >> f;) fields.push_back(std::move(f));
    if (lineno == 1 && fields.size() == 1 &&
        std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); }))
      continue;  // word2vec "<count> <dim>" header
    if (fields.size() != static_cast<std::size_t>(dim))
      throw ParseError("expected " + std::to_string(dim) + " values after token, found " + std::to_string(fields.size()),
                       lineno);
    for (int j = 0; j < dim; ++j) {
      const std::string& f = fields[static_cast<std::size_t>(j)];
      const char* end = f.data() + f.size();
      auto [ptr, ec] = std::from_chars(f.data(), end, values[static_cast<std::size_t>(j)]);
      if (ec != std::errc() || ptr != end || !std::isfinite(values[static_cast<std::size_t>(j)]))
        throw ParseError("bad embedding value \"" + f + "\"", lineno);
    }
    const int id = vocab.id(token);
    if (id <= Vocabulary::kPad || seen[static_cast<std::size_t>(id)]) continue;
    seen[static_cast<std::size_t>(id)] = true;
    ++out.from_file;
    for (int j = 0; j < dim; ++j) out.matrix.at(id, j) = values[static_cast<std::size_t>(j)];
  }
  return out;
}

EmbeddingTable load_embeddings(const Vocabulary& vocab, const std::filesystem::path& path, std::uint64_t seed,
                               int dim) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  return read_embeddings(vocab, in, seed, dim);
}

std::size_t test_size_for(std::size_t n) {
  constexpr std::size_t kFullScaleTest = 992;
  if (n >= 9921) return kFullScaleTest;
  return (n + 9) / 10;
}

DataSplit split(const std::vector<PatRecord>& records, std::uint64_t seed) {
  const std::size_t n_test = test_size_for(records.size());
  if (records.size() <= n_test)
    throw InvalidInput("too few records to split: " + std::to_string(records.size()));
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DataSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_test ? out.test : out.train).push_back(records[order[i]]);
  return out;
}

EncodedText encode_text(std::string_view text, const Vocabulary& vocab) {
  EncodedText out;
  out.tokens = tokenize(text);
  for (const auto& t : out.tokens) {
    const int id = vocab.id(t);
    if (id < 0) out.unknown.push_back(t);
    out.ids.push_back(id < 0 ? Vocabulary::kPad : id);
  }
  return out;
}

BatchStream::BatchStream(const std::vector<PatRecord>& records, int batch_size, const Vocabulary& vocab,
                         const Tensor* embeddings, std::uint64_t seed, bool shuffle)
    : records_(records), batch_size_(batch_size), vocab_(vocab), embeddings_(embeddings), order_(records.size()) {
  if (batch_size <= 0) throw InvalidInput("batch size must be positive");
  std::iota(order_.begin(), order_.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
  encoded_.reserve(records.size());
  for (const auto& r : records) encoded_.push_back(encode_text(r.text, vocab).ids);
}

std::size_t BatchStream::batch_count() const {
  return (records_.size() + static_cast<std::size_t>(batch_size_) - 1) / static_cast<std::size_t>(batch_size_);
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  Batch b;
  int max_len = 0;
  for (std::size_t i = cursor_; i < end; ++i) {
    b.indices.push_back(order_[i]);
    max_len = std::max(max_len, static_cast<int>(encoded_[order_[i]].size()));
  }
  cursor_ = end;
  const int rows = static_cast<int>(b.indices.size());
  b.mask = Tensor({rows, max_len});
  b.palettes = Tensor({rows, static_cast<int>(Palette::kFlatSize)});
  const int dim = embeddings_ ? embeddings_->dim(1) : 0;
  if (embeddings_) b.vectors = Tensor({rows, max_len, dim});
  for (int r = 0; r < rows; ++r) {
    const std::size_t src = b.indices[static_cast<std::size_t>(r)];
    std::vector<int> ids = encoded_[src];
    b.lengths.push_back(static_cast<int>(ids.size()));
    for (int t = 0; t < max_len; ++t) {
      if (t < static_cast<int>(ids.size())) b.mask.at(r, t) = 1.0;
      if (embeddings_ && t < static_cast<int>(ids.size()))
        std::copy_n(embeddings_->data() + static_cast<std::size_t>(ids[t]) * dim, dim,
                    b.vectors.data() + (static_cast<std::size_t>(r) * max_len + t) * dim);
    }
    ids.resize(static_cast<std::size_t>(max_len), Vocabulary::kPad);
    b.ids.push_back(std::move(ids));
    const auto flat = records_[src].palette.flat();
    std::copy(flat.begin(), flat.end(), b.palettes.data() + static_cast<std::size_t>(r) * Palette::kFlatSize);
  }
  return b;
}

}  // namespace pf
