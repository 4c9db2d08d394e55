#include "mfus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/log.hpp"

namespace mfus {
namespace {

std::string row_key(RowKind kind, const std::string& text) {
  return (kind == RowKind::Pattern ? "P\t" : "R\t") + text;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

CooccurrenceMatrix CooccurrenceMatrix::from_records(const std::vector<Record>& records) {
  CooccurrenceMatrix m;
  for (const auto& rec : records) {
    const std::string key = row_key(rec.kind, rec.text);
    auto [rit, row_new] = m.row_index_.try_emplace(key, m.rows_.size());
    if (row_new) {
      SentencePattern p;
      p.id = m.rows_.size();
      p.kind = rec.kind;
      p.text = rec.text;
      p.tokens = tokenize(rec.text);
      if (p.tokens.empty()) fail(ErrorKind::Parse, "empty pattern text");
      if (p.kind == RowKind::KBRelation && p.tokens.size() != 1)
        fail(ErrorKind::Parse, "KB relation '" + rec.text + "' must be a single token");
      m.rows_.push_back(std::move(p));
      m.row_cols_.emplace_back();
    }
    auto [cit, col_new] = m.col_index_.try_emplace(rec.entity_pair, m.cols_.names.size());
    if (col_new) {
      m.cols_.names.push_back(rec.entity_pair);
      m.col_rows_.emplace_back();
    }
    const std::size_t i = rit->second;
    const std::size_t j = cit->second;
    auto& rc = m.row_cols_[i];
    auto pos = std::lower_bound(rc.begin(), rc.end(), j);
    if (pos != rc.end() && *pos == j) continue;
    rc.insert(pos, j);
    auto& cr = m.col_rows_[j];
    cr.insert(std::lower_bound(cr.begin(), cr.end(), i), i);
    m.positives_.push_back({i, j});
  }
  if (m.rows_.empty() || m.cols_.names.empty())
    fail(ErrorKind::EmptyInput, "co-occurrence input has zero rows or columns");
  return m;
}

CooccurrenceMatrix CooccurrenceMatrix::parse(const std::string& contents) {
  std::vector<Record> records;
  std::size_t line_no = 0;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    std::string_view line = raw;
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (fields.size() != 3)
      fail(ErrorKind::Parse, where + "expected 3 tab-separated fields, got " +
                                 std::to_string(fields.size()));
    Record rec;
    if (fields[0] == "P") {
      rec.kind = RowKind::Pattern;
    } else if (fields[0] == "R") {
      rec.kind = RowKind::KBRelation;
    } else {
      fail(ErrorKind::Parse, where + "kind must be P or R, got '" + fields[0] + "'");
    }
    rec.text = std::string(trim(fields[1]));
    rec.entity_pair = std::string(trim(fields[2]));
    if (rec.text.empty()) fail(ErrorKind::Parse, where + "empty pattern");
    if (rec.entity_pair.empty()) fail(ErrorKind::Parse, where + "empty entity pair id");
    if (rec.kind == RowKind::KBRelation && tokenize(rec.text).size() != 1)
      fail(ErrorKind::Parse, where + "KB relation must be a single token");
    records.push_back(std::move(rec));
  }
  return from_records(records);
}

CooccurrenceMatrix CooccurrenceMatrix::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

std::string CooccurrenceMatrix::serialize() const {
  std::string out;
  for (const Cell& c : positives_) {
    const auto& r = rows_[c.row];
    out += r.kind == RowKind::Pattern ? "P\t" : "R\t";
    out += r.text;
    out += '\t';
    out += cols_.names[c.col];
    out += '\n';
  }
  return out;
}

void CooccurrenceMatrix::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

bool CooccurrenceMatrix::contains(std::size_t i, std::size_t j) const {
  const auto& rc = row_cols_.at(i);
  return std::binary_search(rc.begin(), rc.end(), j);
}

std::vector<std::size_t> CooccurrenceMatrix::col_degrees() const {
  std::vector<std::size_t> out(col_rows_.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = col_rows_[j].size();
  return out;
}

std::vector<std::size_t> CooccurrenceMatrix::pattern_freqs() const {
  std::vector<std::size_t> out(row_cols_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = row_cols_[i].size();
  return out;
}

std::optional<std::size_t> CooccurrenceMatrix::find_row(RowKind kind,
                                                        const std::string& text) const {
  auto it = row_index_.find(row_key(kind, text));
  if (it == row_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> CooccurrenceMatrix::find_col(const std::string& entity_pair) const {
  auto it = col_index_.find(entity_pair);
  if (it == col_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> CooccurrenceMatrix::rows_of_kind(RowKind kind) const {
  std::vector<std::size_t> out;
  for (const auto& r : rows_)
    if (r.kind == kind) out.push_back(r.id);
  return out;
}

SampleBatch compute_weights(const CooccurrenceMatrix& m, std::span<const LabeledCell> samples) {
  SampleBatch batch;
  if (samples.empty()) return batch;
  batch.entries.reserve(samples.size());
  double raw_sum = 0.0;
  for (const auto& s : samples) {
    const std::size_t degree = m.col_degree(s.col);
    if (degree == 0)
      fail(ErrorKind::Invariant,
           "column " + std::to_string(s.col) + " has no positives; weight undefined");
    const double raw = 1.0 / static_cast<double>(degree);
    raw_sum += raw;
    batch.entries.push_back({s.row, s.col, s.y, raw});
  }
  const double c = static_cast<double>(samples.size()) / raw_sum;
  for (auto& e : batch.entries) e.weight *= c;
  return batch;
}

std::vector<LabeledCell> draw_negatives(const CooccurrenceMatrix& m,
                                        std::span<const Cell> positives,
                                        const NegativeOptions& options) {
  std::vector<std::size_t> allowed = options.allowed_rows;
  if (allowed.empty()) {
    allowed.resize(m.row_count());
    std::iota(allowed.begin(), allowed.end(), 0);
  }
  if (m.row_count() < 2) fail(ErrorKind::Config, "negative sampling needs at least two rows");
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
  std::vector<LabeledCell> out;
  out.reserve(positives.size() * options.per_positive);
  std::set<std::size_t> saturated;
  for (const Cell& pos : positives) {
    const auto col_rows = m.col_rows(pos.col);
    // Rejection sampling is uniform over the y = 0 allowed rows; fall back to
    // explicit enumeration when the column is dense.
    for (std::size_t n = 0; n < options.per_positive; ++n) {
      std::optional<std::size_t> chosen;
      for (int attempt = 0; attempt < 32 && !chosen; ++attempt) {
        const std::size_t cand = allowed[pick(rng)];
        if (!std::binary_search(col_rows.begin(), col_rows.end(), cand)) chosen = cand;
      }
      if (!chosen) {
        std::vector<std::size_t> free_rows;
        for (std::size_t r : allowed)
          if (!std::binary_search(col_rows.begin(), col_rows.end(), r)) free_rows.push_back(r);
        if (free_rows.empty()) {
          saturated.insert(pos.col);
          break;
        }
        std::uniform_int_distribution<std::size_t> pick_free(0, free_rows.size() - 1);
        chosen = free_rows[pick_free(rng)];
      }
      out.push_back({*chosen, pos.col, 0});
    }
  }
  if (!saturated.empty())
    warn(std::to_string(saturated.size()) + " column(s), first '" +
         m.cols().names[*saturated.begin()] +
         "', are positive for every candidate row; their negatives were skipped");
  return out;
}

std::string SplitAssignment::serialize() const {
  std::vector<std::size_t> ids = validation_rows;
  std::sort(ids.begin(), ids.end());
  std::string out = "[validation]\n";
  for (std::size_t id : ids) out += std::to_string(id) + "\n";
  return out;
}

void SplitAssignment::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

SplitAssignment SplitAssignment::load(const std::filesystem::path& path,
                                      const CooccurrenceMatrix& m) {
  const std::string contents = read_file(path);
  bool in_section = false;
  std::vector<bool> is_val(m.row_count(), false);
  std::size_t line_no = 0;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line == "[validation]") {
      in_section = true;
      continue;
    }
    if (!in_section)
      fail(ErrorKind::Parse, "split file line " + std::to_string(line_no) +
                                 ": row id before [validation] header");
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoul(std::string(line), &used);
      if (used != line.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, "split file line " + std::to_string(line_no) + ": bad row id");
    }
    if (id >= m.row_count())
      fail(ErrorKind::Parse, "split file line " + std::to_string(line_no) + ": row id " +
                                 std::to_string(id) + " out of range");
    is_val[id] = true;
  }
  SplitAssignment s;
  for (std::size_t i = 0; i < m.row_count(); ++i)
    (is_val[i] ? s.validation_rows : s.train_rows).push_back(i);
  return s;
}

SplitAssignment SplitAssignment::all_train(const CooccurrenceMatrix& m) {
  SplitAssignment s;
  s.train_rows.resize(m.row_count());
  std::iota(s.train_rows.begin(), s.train_rows.end(), 0);
  return s;
}

SplitAssignment split_validation(const CooccurrenceMatrix& m, double fraction,
                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    fail(ErrorKind::Config, "validation fraction must lie in (0,1)");
  const auto pattern_rows = m.rows_of_kind(RowKind::Pattern);
  if (pattern_rows.size() < 20)
    fail(ErrorKind::Config, "validation split needs at least 20 pattern rows, have " +
                                std::to_string(pattern_rows.size()));

  // Group rows by token sequence; std::map keeps the group order independent
  // of hashing.
  std::map<std::vector<std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i : pattern_rows) groups[m.row(i).tokens].push_back(i);
  std::vector<const std::vector<std::size_t>*> order;
  for (const auto& [tokens, ids] : groups) order.push_back(&ids);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_val = static_cast<std::size_t>(
      std::max(1.0, std::floor(fraction * static_cast<double>(order.size()) + 0.5)));
  std::vector<bool> is_val(m.row_count(), false);
  for (std::size_t g = 0; g < n_val && g < order.size(); ++g)
    for (std::size_t i : *order[g]) is_val[i] = true;

  SplitAssignment s;
  for (std::size_t i = 0; i < m.row_count(); ++i)
    (is_val[i] ? s.validation_rows : s.train_rows).push_back(i);
  return s;
}

}  // namespace mfus
