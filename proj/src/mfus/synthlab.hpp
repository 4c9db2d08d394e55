#pragma once

// Synthetic corpora with known facet structure, plus brute-force references
// for the facet distance and for spherical k-means.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfus/corpus.hpp"
#include "mfus/entailgen.hpp"
#include "mfus/evalkit.hpp"
#include "mfus/tensor.hpp"

namespace mfus {

struct SynthSpec {
  std::size_t relations = 4;
  std::size_t dim = 16;
  std::size_t train_patterns = 120;
  std::size_t eval_patterns = 40;  // per evaluation split
  std::size_t f_max = 3;
  std::size_t pairs_per_relation = 40;
  // Entity pairs drawn per facet of a pattern; a pattern's first facet draws
  // `dominant_pairs` instead so facets are unevenly supported.
  std::size_t pairs_per_facet = 4;
  std::size_t dominant_pairs = 8;
  std::size_t markers_per_relation = 6;
  std::size_t distractors = 8;
  std::size_t distractors_per_pattern = 1;
  double noise = 0.1;
  std::size_t entail_pairs = 40;
  std::size_t word_dim = 16;
  double word_noise = 0.3;
  bool kb_relations = true;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& j);
};

struct SynthData {
  SynthSpec spec;
  CooccurrenceMatrix matrix;
  // Relation ids behind each matrix row; a KB row holds its own relation.
  std::vector<std::vector<std::size_t>> row_relations;
  std::vector<std::size_t> entity_relation;  // per matrix column
  nn::Mat prototypes;                        // relations x dim
  nn::Mat entity_vectors;                    // per matrix column, unit rows
  REEvalSet validation;
  REEvalSet test;
  // Specific-premise pairs labelled entailment plus unrelated pairs labelled other.
  std::vector<EntailmentCandidate> entailment;
  std::string embeddings_text;

  static std::string relation_name(std::size_t f);
  nlohmann::json truth_json() const;
  // cooccur.tsv, eval_validation.tsv, eval_test.tsv, entail.tsv, embeddings.txt, truth.json
  void write(const std::filesystem::path& dir) const;
};

SynthData generate(const SynthSpec& spec);

struct EtaOracle {
  double distance = 1.0;
  double eta = 0.0;
  std::size_t k_best = 0;
};

// Exhaustive scan of eta over {0, grid, 2 grid, ..., 1} for every facet.
EtaOracle oracle_eta_grid(const nn::Mat& facets, std::span<const double> entity, double grid = 1e-3);

// Best of `restarts` Lloyd runs with cosine assignment on unit-normalized
// points; returns unit centers (K x d).
nn::Mat oracle_spherical_kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                                std::size_t restarts, std::uint64_t seed);

// Free facet vectors fitted to fixed unit points by gradient descent on the
// positive-pair facet distance; farthest-first initialization.
nn::Mat fit_free_facets(const std::vector<std::vector<double>>& points, std::size_t k,
                        std::size_t steps, double lr, std::uint64_t seed);

// Unit points around `centers.size()` random unit centers in `dim` dimensions.
struct ClusterSample {
  std::vector<std::vector<double>> centers;
  std::vector<std::vector<double>> points;
};
ClusterSample sample_clusters(std::size_t clusters, std::size_t per_cluster, std::size_t dim,
                              double sigma, std::uint64_t seed);

}  // namespace mfus
