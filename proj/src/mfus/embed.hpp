#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mfus/tensor.hpp"

namespace mfus {

class CooccurrenceMatrix;

class Vocabulary {
 public:
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kArg1 = "$ARG1";
  static constexpr const char* kArg2 = "$ARG2";

  Vocabulary();
  // Specials first, then every row token of the matrix in first-seen order.
  static Vocabulary from_matrix(const CooccurrenceMatrix& m);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t add(const std::string& token);
  // Index of `token`, or of <unk> when absent.
  std::size_t index(const std::string& token) const;
  bool contains(const std::string& token) const { return map_.count(token) != 0; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  static bool is_special(const std::string& token);

 private:
  std::unordered_map<std::string, std::size_t> map_;
  std::vector<std::string> tokens_;
};

struct PretrainedEmbeddings {
  nn::Mat matrix;  // vocab.size() x d_word
  double coverage = 0.0;
  std::size_t found = 0;
};

// Exact-case lookup first, lowercase second, seeded random rows (norm <= 1)
// otherwise. Special tokens always get random rows. An optional first line
// "V d" is skipped.
PretrainedEmbeddings load_embedding_file(const std::filesystem::path& path,
                                         const Vocabulary& vocab, std::uint64_t seed);
PretrainedEmbeddings parse_embeddings(const std::string& contents, const Vocabulary& vocab,
                                      std::uint64_t seed);
// No file: every row random, coverage 0.
PretrainedEmbeddings random_embeddings(const Vocabulary& vocab, std::size_t d_word,
                                       std::uint64_t seed);

class WordStats {
 public:
  static constexpr double kDefaultNu = 1e-4;

  // Each pattern's tokens counted once per pattern.
  static WordStats fit(const std::vector<std::vector<std::string>>& patterns,
                       double nu = kDefaultNu);

  double probability(const std::string& token) const;
  // nu / (nu + p(w)); unseen tokens weigh 1.
  double sif_weight(const std::string& token) const;
  double nu() const { return nu_; }
  const std::unordered_map<std::string, double>& probabilities() const { return p_; }

 private:
  std::unordered_map<std::string, double> p_;
  double nu_ = kDefaultNu;
};

// sum over tokens of sif_weight(w) * W[w]; `<eos>` must not be passed.
std::vector<double> sif_average(std::span<const std::string> tokens, const nn::Mat& table,
                                const Vocabulary& vocab, const WordStats& stats);

// H (d x d_word) times s_aw.
std::vector<double> apply_h(std::span<const double> s_aw, const nn::Mat& h);
// Differentiable variant used in training: 1 x d_word row -> 1 x d row.
nn::Tensor apply_h(const nn::Tensor& s_aw_row, const nn::Tensor& h);

}  // namespace mfus
