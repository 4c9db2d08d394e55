#pragma once

// Command layer shared by the C API and the CLI: each command reads its
// inputs, writes artifacts plus a manifest under `out`, and returns a JSON
// summary.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfus/corpus.hpp"
#include "mfus/entailgen.hpp"
#include "mfus/evalkit.hpp"
#include "mfus/model.hpp"
#include "mfus/trainer.hpp"
#include "mfus/uschema.hpp"

namespace mfus {

inline constexpr const char* kVersion = "0.3.0";

// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Facets of each distinct text, computed once.
class FacetCache {
 public:
  explicit FacetCache(const FacetModel& model) : model_(model) {}
  void prefetch(const std::vector<std::pair<std::string, RowKind>>& items, std::size_t threads);
  const FacetSet& get(const std::string& text, RowKind kind);

 private:
  const FacetModel& model_;
  std::map<std::pair<std::string, RowKind>, FacetSet> cache_;
};

// Sim of every instance pattern against every relation. With `uschema`, a
// pattern that is a matrix row takes the max with the row-embedding cosine.
ScoreMatrix re_scores(const FacetModel& model, const REEvalSet& set,
                      const std::vector<std::string>& relations, std::size_t threads,
                      const FactorModel* uschema = nullptr,
                      const CooccurrenceMatrix* matrix = nullptr);

struct ReOutcome {
  std::vector<std::string> relations;
  std::vector<double> thresholds;
  PRF validation;
  PRF test;
};

ReOutcome evaluate_re_pipeline(const FacetModel& model, const REEvalSet& validation,
                               const REEvalSet& test, std::size_t threads,
                               const FactorModel* uschema = nullptr,
                               const CooccurrenceMatrix* matrix = nullptr);

struct EntailScores {
  std::vector<double> classification;  // asym(premise, hypothesis)
  std::vector<double> direction;       // ours_diff(premise, hypothesis)
  std::vector<double> freq_direction;  // freq_diff(premise, hypothesis)
};

EntailScores entail_scores(const FacetModel& model, const std::vector<EntailmentCandidate>& cands,
                           std::size_t threads);

// Word vectors for `vocab`: the embedding file when given, seeded random rows
// otherwise. Dimension must equal d_word.
nn::Mat word_vectors_for(const Vocabulary& vocab, const std::optional<std::string>& path,
                         std::size_t d_word, std::uint64_t seed, double* coverage = nullptr);

// Config from options: `config` (path) or `config_json` (text), then `seed`,
// `ablation` and `encoder` overrides.
RunConfig config_from_options(const nlohmann::json& opts);

// Input paths missing from `opts` are taken from the config's "inputs"
// section. Commands: train, eval-re, eval-entail, score, entail-mine, synth, project,
// hpo, gradcheck, uschema-train.
nlohmann::json run_command(const std::string& command, const nlohmann::json& opts);
const std::vector<std::string>& command_names();

}  // namespace mfus
