#pragma once

// Clamped-projection facet distance, the weighted relational loss and the
// autoencoder regularizer, plus assembly of a mini-batch loss.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mfus/corpus.hpp"
#include "mfus/model.hpp"
#include "mfus/tensor.hpp"

namespace mfus {

struct DistanceResult {
  double distance = 1.0;
  std::size_t k_best = 0;
  std::vector<double> eta;
  std::vector<double> facet_distances;
};

// min over facets of |e/|e| - eta_k s_k|^2 with eta_k clamped to [0,1].
// Zero-norm facets get eta 0 and distance 1; a zero entity throws.
DistanceResult facet_distance(const nn::Mat& facets, std::span<const double> entity);

// sum_n coefficient[n] * D(facets, unit_entities row n). Gradient reaches only
// the winning facet of each row. Entities must already be unit length.
nn::Tensor weighted_facet_distance(const nn::Tensor& facets, const nn::Tensor& unit_entities,
                                   std::vector<double> coefficients);

// (2y - 1) r D summed over samples that all belong to the row owning `facets`.
nn::Tensor relational_loss(const nn::Tensor& facets, const nn::Tensor& entity_table,
                           std::span<const Sample> samples);

// gamma (|H s_i - mu|^2 - |H s_q - mu|^2) where mu is the mean facet.
nn::Tensor autoencoder_loss(const nn::Tensor& facets, const nn::Tensor& h,
                            std::span<const double> sif_own, std::span<const double> sif_other,
                            double gamma);

struct RegConfig {
  double gamma = 0.2;
  bool enabled = true;
  bool on_relations = true;
};

// One optimisation unit: weighted samples (each scored with the facets of its
// own row) plus (i, q) regularizer pairs.
struct BatchPlan {
  std::vector<Sample> samples;
  std::vector<std::pair<std::size_t, std::size_t>> regularizer_pairs;
};

struct LossTerms {
  nn::Tensor total;
  double relational = 0.0;
  double regularizer = 0.0;
  std::size_t rows_forwarded = 0;
};

// Each distinct row referenced by the plan is encoded once. `sif` holds one
// SIF vector per matrix row (rows x d_word).
LossTerms batch_loss(const FacetModel& model, const CooccurrenceMatrix& m,
                     const BatchPlan& plan, const nn::Mat& sif, const RegConfig& reg,
                     bool train, std::mt19937_64& rng);

// SIF vectors for every matrix row from frozen word vectors.
nn::Mat sif_table(const CooccurrenceMatrix& m, const nn::Mat& word_vectors,
                  const Vocabulary& vocab, const WordStats& stats);

}  // namespace mfus
