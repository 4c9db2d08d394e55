#pragma once

// Relation-retrieval evaluation with per-relation thresholds, entailment
// ranking and direction metrics, and classical MDS for visualization.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfus/entailgen.hpp"
#include "mfus/tensor.hpp"

namespace mfus {

struct REInstance {
  std::string pattern;
  std::string entity_pair;
  std::vector<std::string> gold;
};

struct REEvalSet {
  std::vector<REInstance> instances;

  // `pattern<TAB>entity_pair_id<TAB>rel_1|rel_2|...`; an empty gold field means
  // no relation holds.
  static REEvalSet parse(const std::string& contents);
  static REEvalSet load(const std::filesystem::path& path);
  std::string serialize() const;
  // Sorted union of gold relations.
  std::vector<std::string> relations() const;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  nlohmann::json to_json() const;
};

PRF prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

// scores[n][r]: similarity of instance n to relation r.
using ScoreMatrix = std::vector<std::vector<double>>;

inline constexpr double kNeverFires = std::numeric_limits<double>::infinity();

// Per relation, the observed score that maximizes that relation's F1 when
// used as an inclusive threshold; the lowest such score wins ties. Relations
// without positive instances get +inf.
std::vector<double> tune_thresholds(const ScoreMatrix& scores, const REEvalSet& set,
                                    const std::vector<std::string>& relations);

// Micro-averaged over all (instance, relation) decisions.
PRF evaluate_re(const ScoreMatrix& scores, const REEvalSet& set,
                const std::vector<std::string>& relations, const std::vector<double>& thresholds);

// Sum over ranks k of precision@k at each positive, divided by the positive
// count. Equal scores keep input order. Throws when there are no positives.
double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive);

struct EntailEvalReport {
  double ap_at_all = 0.0;
  double micro_direction_acc = 0.0;
  double macro_direction_acc = 0.0;
  std::size_t candidates = 0;
  std::size_t positives = 0;
  std::size_t direction_pairs = 0;
  std::size_t tied_scores = 0;

  nlohmann::json to_json() const;
};

// classification[n] ranks candidate n (premise-first asymmetric score);
// direction[n] is the premise-minus-hypothesis difference.
EntailEvalReport evaluate_entailment(const std::vector<EntailmentCandidate>& cands,
                                     const std::vector<double>& classification,
                                     const std::vector<double>& direction);

// Credit for one direction call: 1 when `diff` favours the gold premise, 0.5
// on a tie, 0 otherwise.
double direction_credit(double diff);

// Classical MDS: double-centred squared distances, top eigenvectors scaled by
// the root eigenvalue. n x dims; missing rank fills zero columns with a warning.
nn::Mat classical_mds(const std::vector<std::vector<double>>& points, std::size_t dims = 2);

struct MdsInput {
  std::string label;
  std::string kind;  // facet, relation_facet or entity
  std::vector<double> vector;
  std::size_t degree = 0;  // entity points only
};

struct MdsOptions {
  std::size_t min_degree = 5;
  // Unset means the 90th percentile of entity-to-nearest-facet distances.
  std::optional<double> far_threshold;
  double jitter_eps = 0.0;
  std::uint64_t seed = 0;
};

struct MdsPoint {
  std::string label;
  std::string kind;
  double x = 0.0;
  double y = 0.0;
};

std::vector<MdsPoint> project_mds(const std::vector<MdsInput>& inputs, const MdsOptions& options);
std::string mds_csv(const std::vector<MdsPoint>& points);

}  // namespace mfus
