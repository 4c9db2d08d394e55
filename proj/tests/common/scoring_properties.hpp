#pragma once

// Randomized checks of the facet-set scoring algebra, shared by the unit
// suite and the acceptance run.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "mfus/scoring.hpp"

namespace props {

inline mfus::FacetSet random_set(std::mt19937_64& rng, std::size_t k, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  mfus::FacetSet s{mfus::nn::Mat(k, d)};
  for (double& v : s.facets.data) v = g(rng);
  return s;
}

// Brute force: mean over rows of b of the best cosine against rows of a.
inline double asym_oracle(const mfus::FacetSet& a, const mfus::FacetSet& b) {
  auto cos = [](std::span<const double> x, std::span<const double> y) {
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      xy += x[c] * y[c];
      xx += x[c] * x[c];
      yy += y[c] * y[c];
    }
    return xy / std::sqrt(xx * yy);
  };
  double total = 0;
  for (std::size_t m = 0; m < b.size(); ++m) {
    double best = -2;
    for (std::size_t k = 0; k < a.size(); ++k)
      best = std::max(best, cos(a.facets.row(k), b.facets.row(m)));
    total += best;
  }
  return total / static_cast<double>(b.size());
}

// One randomized case; returns a description of every violated property.
inline std::vector<std::string> check_case(std::mt19937_64& rng) {
  std::vector<std::string> bad;
  const std::size_t d = 2 + rng() % 7;
  const std::size_t ka = 1 + rng() % 6, kb = 1 + rng() % 6;
  const auto a = random_set(rng, ka, d);
  const auto b = random_set(rng, kb, d);
  const double tol = 1e-12;

  const double ab = mfus::asym(a, b), ba = mfus::asym(b, a);
  if (!(ab >= -1 - tol && ab <= 1 + tol)) bad.push_back("asym out of [-1,1]");
  if (std::abs(ab - asym_oracle(a, b)) > 1e-12) bad.push_back("asym differs from brute force");
  const double s1 = mfus::sim(a, b), s2 = mfus::sim(b, a);
  if (s1 != s2) bad.push_back("sim not symmetric");
  if (std::abs(s1 - 0.5 * (ab + ba)) > tol) bad.push_back("sim is not the mean of both directions");
  const auto d1 = mfus::ours_diff(a, b), d2 = mfus::ours_diff(b, a);
  if (d1.diff != -d2.diff) bad.push_back("ours_diff not antisymmetric");
  if ((d1.premise == mfus::Premise::First) != (d2.premise == mfus::Premise::Second))
    bad.push_back("premise call not antisymmetric");
  if (std::abs(mfus::asym(a, a) - 1.0) > tol) bad.push_back("self asym is not 1");
  if (mfus::ours_diff(a, a).premise != mfus::Premise::Tie) bad.push_back("self diff is not a tie");

  // Adding facets to the covering side never lowers its coverage.
  mfus::FacetSet sup = a;
  const auto extra = random_set(rng, 1 + rng() % 3, d);
  sup.facets.data.insert(sup.facets.data.end(), extra.facets.data.begin(), extra.facets.data.end());
  sup.facets.rows += extra.size();
  if (mfus::asym(sup, b) < ab - tol) bad.push_back("superset lowered asym");

  // Per-facet positive rescaling changes nothing.
  mfus::FacetSet scaled = a;
  std::uniform_real_distribution<double> f(0.01, 100.0);
  for (std::size_t k = 0; k < scaled.size(); ++k) {
    const double c = f(rng);
    for (double& v : scaled.facets.row(k)) v *= c;
  }
  if (std::abs(mfus::asym(scaled, b) - ab) > 1e-12) bad.push_back("asym not scale invariant");

  // Single facets on both sides reduce to cosine and always tie.
  const auto x = random_set(rng, 1, d), y = random_set(rng, 1, d);
  const double c = mfus::cosine(x.facets.row(0), y.facets.row(0));
  if (std::abs(mfus::asym(x, y) - c) > tol || std::abs(mfus::sim(x, y) - c) > tol)
    bad.push_back("single facet is not cosine");
  if (mfus::ours_diff(x, y).premise != mfus::Premise::Tie) bad.push_back("single facets do not tie");
  return bad;
}

}  // namespace props
