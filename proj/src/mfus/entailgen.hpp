#pragma once

// Entailment candidate mining by hypernym substitution, mutual-pair
// exclusion, popularity ranking and a hypernym-disjoint split.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mfus/corpus.hpp"

namespace mfus {

struct LexiconEntry {
  std::string lemma;
  std::string synset_id;
  std::string hypernym_synset_id;
  std::string hypernym_lemma;
};

class HypernymLexicon {
 public:
  static HypernymLexicon from_entries(std::vector<LexiconEntry> entries);
  // `lemma<TAB>synset_id<TAB>hypernym_synset_id<TAB>hypernym_lemma`, '#' comments.
  static HypernymLexicon parse(const std::string& contents);
  static HypernymLexicon load(const std::filesystem::path& path);

  const std::vector<LexiconEntry>& entries() const { return entries_; }
  // Every lemma of every hypernym synset of every sense of `word`, sorted.
  // Lookup ignores case.
  const std::vector<std::string>& hypernym_lemmas(const std::string& word) const;
  bool is_hypernym_of(const std::string& general, const std::string& specific) const;

 private:
  std::vector<LexiconEntry> entries_;
  std::map<std::string, std::vector<std::string>> hypernyms_;
};

enum class EntailLabel { Unlabeled, Entailment, Paraphrase, Other };

const char* to_string(EntailLabel l);
EntailLabel entail_label_from_string(const std::string& s);

struct EntailmentCandidate {
  std::string premise;
  std::string hypothesis;
  std::string replaced;
  std::string replacing;
  std::size_t freq_premise = 0;
  std::size_t freq_hypothesis = 0;
  std::size_t candidate_freq = 0;
  std::string split;
  EntailLabel label = EntailLabel::Unlabeled;

  friend bool operator==(const EntailmentCandidate&, const EntailmentCandidate&) = default;
};

// Every single-token hypernym substitution of every pattern row whose result
// is itself a pattern row. $ARG1, $ARG2 and <eos> are never replaced.
std::vector<EntailmentCandidate> mine_candidates(const CooccurrenceMatrix& m,
                                                 const HypernymLexicon& lexicon);

// Drops candidates whose replaced word is also a hypernym of the replacing word.
std::vector<EntailmentCandidate> exclude_mutual(const std::vector<EntailmentCandidate>& cands,
                                                const HypernymLexicon& lexicon);

struct HypothesisGroup {
  std::string hypothesis;
  std::vector<EntailmentCandidate> premises;
  double popularity = 0.0;
};

struct Selection {
  std::vector<EntailmentCandidate> selected;
  std::vector<HypothesisGroup> groups;
};

inline constexpr std::size_t kPremisesPerHypothesis = 6;

Selection rank_and_select(const std::vector<EntailmentCandidate>& cands, long long n);

struct EntailSplit {
  std::vector<EntailmentCandidate> validation;
  std::vector<EntailmentCandidate> test;
};

// Candidates keep their order inside each side; `split` is set on each.
EntailSplit split_by_hypernym(const std::vector<EntailmentCandidate>& selected,
                              double val_fraction, std::uint64_t seed);

std::string candidates_tsv(const std::vector<EntailmentCandidate>& cands);
std::vector<EntailmentCandidate> parse_candidates_tsv(const std::string& contents);
// `premise<TAB>hypothesis<TAB>label` rows overwrite the matching candidates'
// labels; unmatched rows are ignored with a warning.
void merge_annotations(std::vector<EntailmentCandidate>& cands, const std::string& contents);

}  // namespace mfus
