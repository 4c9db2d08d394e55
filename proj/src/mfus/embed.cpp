#include "mfus/embed.hpp"

#include <charconv>
#include <cmath>
#include <random>

#include "mfus/corpus.hpp"
#include "mfus/error.hpp"
#include "mfus/io.hpp"

namespace mfus {
namespace {

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_integer(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

void fill_random_row(std::span<double> row, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(row.size()));
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (double& v : row) v = unif(rng);
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* t : {kEos, kUnk, kArg1, kArg2}) add(t);
}

Vocabulary Vocabulary::from_matrix(const CooccurrenceMatrix& m) {
  Vocabulary v;
  for (const auto& row : m.rows())
    for (const auto& tok : row.tokens) v.add(tok);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = map_.try_emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::index(const std::string& token) const {
  auto it = map_.find(token);
  return it == map_.end() ? map_.at(kUnk) : it->second;
}

bool Vocabulary::is_special(const std::string& token) {
  return token == kEos || token == kUnk || token == kArg1 || token == kArg2;
}

PretrainedEmbeddings parse_embeddings(const std::string& contents, const Vocabulary& vocab,
                                      std::uint64_t seed) {
  std::unordered_map<std::string, std::size_t> wanted;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    wanted.emplace(vocab.token(i), 0);
    wanted.emplace(to_lower(vocab.token(i)), 0);
  }
  std::unordered_map<std::string, std::vector<double>> rows;
  std::size_t dim = 0;
  std::size_t line_no = 0;
  bool any_line = false;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    const auto fields = fields_of(raw);
    if (fields.empty()) continue;
    if (!any_line && fields.size() == 2 && is_integer(fields[0]) && is_integer(fields[1])) {
      any_line = true;
      continue;
    }
    any_line = true;
    const std::size_t d = fields.size() - 1;
    if (d == 0) fail(ErrorKind::Parse, "embedding line " + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = d;
    if (d != dim)
      fail(ErrorKind::Parse, "embedding line " + std::to_string(line_no) + ": dimension " +
                                 std::to_string(d) + " differs from " + std::to_string(dim));
    const std::string token(fields[0]);
    if (!wanted.count(token) || rows.count(token)) continue;
    std::vector<double> values(d);
    for (std::size_t k = 0; k < d; ++k) {
      const auto f = fields[k + 1];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), values[k]);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size())
        fail(ErrorKind::Parse, "embedding line " + std::to_string(line_no) + ": bad number '" +
                                   std::string(f) + "'");
    }
    rows.emplace(token, std::move(values));
  }
  if (dim == 0) fail(ErrorKind::EmptyInput, "embedding file has no vectors");

  PretrainedEmbeddings out;
  out.matrix = nn::Mat(vocab.size(), dim);
  std::mt19937_64 rng(seed);
  std::size_t considered = 0;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const std::string& tok = vocab.token(i);
    auto row = out.matrix.row(i);
    if (Vocabulary::is_special(tok)) {
      fill_random_row(row, rng);
      continue;
    }
    ++considered;
    auto it = rows.find(tok);
    if (it == rows.end()) it = rows.find(to_lower(tok));
    if (it != rows.end()) {
      std::copy(it->second.begin(), it->second.end(), row.begin());
      ++out.found;
    } else {
      fill_random_row(row, rng);
    }
  }
  out.coverage =
      considered == 0 ? 0.0 : static_cast<double>(out.found) / static_cast<double>(considered);
  return out;
}

PretrainedEmbeddings load_embedding_file(const std::filesystem::path& path,
                                         const Vocabulary& vocab, std::uint64_t seed) {
  return parse_embeddings(read_file(path), vocab, seed);
}

PretrainedEmbeddings random_embeddings(const Vocabulary& vocab, std::size_t d_word,
                                       std::uint64_t seed) {
  if (d_word == 0) fail(ErrorKind::Config, "d_word must be positive");
  PretrainedEmbeddings out;
  out.matrix = nn::Mat(vocab.size(), d_word);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < vocab.size(); ++i) fill_random_row(out.matrix.row(i), rng);
  return out;
}

WordStats WordStats::fit(const std::vector<std::vector<std::string>>& patterns, double nu) {
  if (!(nu > 0.0)) fail(ErrorKind::Config, "SIF constant nu must be positive");
  WordStats s;
  s.nu_ = nu;
  std::unordered_map<std::string, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& p : patterns) {
    for (const auto& tok : p) {
      ++counts[tok];
      ++total;
    }
  }
  for (const auto& [tok, c] : counts)
    s.p_[tok] = static_cast<double>(c) / static_cast<double>(total);
  return s;
}

double WordStats::probability(const std::string& token) const {
  auto it = p_.find(token);
  return it == p_.end() ? 0.0 : it->second;
}

double WordStats::sif_weight(const std::string& token) const {
  return nu_ / (nu_ + probability(token));
}

std::vector<double> sif_average(std::span<const std::string> tokens, const nn::Mat& table,
                                const Vocabulary& vocab, const WordStats& stats) {
  if (tokens.empty()) fail(ErrorKind::EmptyInput, "SIF average of an empty pattern");
  std::vector<double> out(table.cols, 0.0);
  for (const auto& tok : tokens) {
    if (tok == Vocabulary::kEos)
      fail(ErrorKind::Invariant, "<eos> must not take part in the SIF average");
    const double w = stats.sif_weight(tok);
    const auto row = table.row(vocab.index(tok));
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * row[k];
  }
  return out;
}

std::vector<double> apply_h(std::span<const double> s_aw, const nn::Mat& h) {
  if (h.cols != s_aw.size())
    fail(ErrorKind::Shape, "apply_h: H is " + std::to_string(h.rows) + "x" +
                               std::to_string(h.cols) + " but s_aw has " +
                               std::to_string(s_aw.size()) + " entries");
  std::vector<double> out(h.rows, 0.0);
  for (std::size_t r = 0; r < h.rows; ++r) out[r] = nn::dot(h.row(r), s_aw);
  return out;
}

nn::Tensor apply_h(const nn::Tensor& s_aw_row, const nn::Tensor& h) {
  if (s_aw_row.rows() != 1 || h.cols() != s_aw_row.cols())
    fail(ErrorKind::Shape, "apply_h: dimension mismatch");
  return nn::matmul(s_aw_row, nn::transpose(h));
}

}  // namespace mfus
