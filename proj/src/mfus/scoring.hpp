#pragma once

// Facet-set similarity: directional coverage score, its symmetric average,
// entailment direction from the score difference, and the frequency baseline.

#include <span>
#include <string>
#include <vector>

#include "mfus/model.hpp"
#include "mfus/tensor.hpp"

namespace mfus {

enum class Premise { First, Second, Tie };

const char* to_string(Premise p);

struct DirectionCall {
  double diff = 0.0;
  Premise premise = Premise::Tie;
};

inline constexpr double kTieThreshold = 1e-12;

// Rows of `a` and `b` must already be unit length: mean over rows m of b of
// max over rows k of a of <a_k, b_m>.
double asym_normalized(const nn::Mat& a, const nn::Mat& b);

double asym(const FacetSet& a, const FacetSet& b);
double sim(const FacetSet& a, const FacetSet& b);
// asym(a, b) - asym(b, a); positive means `a` is the premise.
DirectionCall ours_diff(const FacetSet& a, const FacetSet& b);
// freq(b) - freq(a); positive means `a` (the rarer one) is the premise.
DirectionCall freq_diff(double freq_a, double freq_b);

double cosine(std::span<const double> a, std::span<const double> b);

struct ScoredPair {
  std::size_t i = 0;
  std::size_t j = 0;
  double asym_ij = 0.0;
  double asym_ji = 0.0;
  double sim = 0.0;
  double ours_diff = 0.0;
};

ScoredPair score_pair(std::size_t i, std::size_t j, const FacetSet& a, const FacetSet& b);

// Shortest round-trip decimal form.
std::string format_double(double v);

// Header `i,j,asym_ij,asym_ji,sim,ours_diff` then one line per pair.
std::string scores_csv(const std::vector<ScoredPair>& pairs);

}  // namespace mfus
