#pragma once

// Merged pattern/KB-relation x entity-pair co-occurrence matrix, sample
// weighting, negative sampling and the validation split.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mfus {

enum class RowKind { Pattern, KBRelation };

struct SentencePattern {
  std::size_t id = 0;
  RowKind kind = RowKind::Pattern;
  std::string text;
  std::vector<std::string> tokens;
};

struct EntityPairTable {
  std::vector<std::string> names;

  std::size_t size() const { return names.size(); }
};

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const Cell&, const Cell&) = default;
};

std::vector<std::string> tokenize(const std::string& text);

class CooccurrenceMatrix {
 public:
  struct Record {
    RowKind kind;
    std::string text;
    std::string entity_pair;
  };

  // Interns rows by (kind, text) and columns by entity-pair id in first-seen
  // order; repeated cells collapse to one positive.
  static CooccurrenceMatrix from_records(const std::vector<Record>& records);
  static CooccurrenceMatrix load(const std::filesystem::path& path);
  static CooccurrenceMatrix parse(const std::string& contents);

  // Writes positives in first-seen order so a re-load reproduces every id.
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  std::size_t row_count() const { return rows_.size(); }
  std::size_t col_count() const { return cols_.size(); }
  const std::vector<SentencePattern>& rows() const { return rows_; }
  const SentencePattern& row(std::size_t i) const { return rows_.at(i); }
  const EntityPairTable& cols() const { return cols_; }

  // Positives in first-seen order.
  const std::vector<Cell>& positives() const { return positives_; }
  // Columns of row i / rows of column j, both ascending.
  std::span<const std::size_t> row_cols(std::size_t i) const { return row_cols_.at(i); }
  std::span<const std::size_t> col_rows(std::size_t j) const { return col_rows_.at(j); }
  bool contains(std::size_t i, std::size_t j) const;

  std::size_t col_degree(std::size_t j) const { return col_rows_.at(j).size(); }
  std::size_t pattern_freq(std::size_t i) const { return row_cols_.at(i).size(); }
  std::vector<std::size_t> col_degrees() const;
  std::vector<std::size_t> pattern_freqs() const;

  std::optional<std::size_t> find_row(RowKind kind, const std::string& text) const;
  std::optional<std::size_t> find_col(const std::string& entity_pair) const;
  std::vector<std::size_t> rows_of_kind(RowKind kind) const;

 private:
  std::vector<SentencePattern> rows_;
  EntityPairTable cols_;
  std::vector<Cell> positives_;
  std::vector<std::vector<std::size_t>> row_cols_;
  std::vector<std::vector<std::size_t>> col_rows_;
  std::unordered_map<std::string, std::size_t> row_index_;
  std::unordered_map<std::string, std::size_t> col_index_;
};

struct Sample {
  std::size_t row = 0;
  std::size_t col = 0;
  int y = 0;
  double weight = 1.0;
};

struct LabeledCell {
  std::size_t row = 0;
  std::size_t col = 0;
  int y = 0;
};

struct SampleBatch {
  std::vector<Sample> entries;
  // (i, q) pairs for the autoencoder regularizer; q is a random other row.
  std::vector<std::pair<std::size_t, std::size_t>> regularizer_pairs;
};

// r = c / col_degree[j] with c chosen so the weights average to one over the
// whole sample set. Negatives use the positive degree of their column.
SampleBatch compute_weights(const CooccurrenceMatrix& m, std::span<const LabeledCell> samples);

struct NegativeOptions {
  std::uint64_t seed = 0;
  std::size_t per_positive = 1;
  // Rows a negative may be drawn from; empty means every row.
  std::vector<std::size_t> allowed_rows;
};

// For each positive (i, j) draws rows i' with y(i', j) = 0 uniformly from the
// allowed rows. Columns positive for every allowed row are skipped with a
// warning.
std::vector<LabeledCell> draw_negatives(const CooccurrenceMatrix& m,
                                        std::span<const Cell> positives,
                                        const NegativeOptions& options);

struct SplitAssignment {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  // Reads the `[validation]` file; every other row of `m` becomes training.
  static SplitAssignment load(const std::filesystem::path& path, const CooccurrenceMatrix& m);
  static SplitAssignment all_train(const CooccurrenceMatrix& m);
};

// Holds out `fraction` of the unique pattern token sequences. Rows sharing a
// token sequence land on the same side; KB relation rows always train.
SplitAssignment split_validation(const CooccurrenceMatrix& m, double fraction,
                                 std::uint64_t seed);

}  // namespace mfus
