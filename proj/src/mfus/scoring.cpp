#include "mfus/scoring.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include "mfus/error.hpp"

namespace mfus {

const char* to_string(Premise p) {
  switch (p) {
    case Premise::First: return "first";
    case Premise::Second: return "second";
    case Premise::Tie: return "tie";
  }
  return "tie";
}

double asym_normalized(const nn::Mat& a, const nn::Mat& b) {
  if (a.rows == 0 || b.rows == 0) fail(ErrorKind::Shape, "asym: empty facet set");
  if (a.cols != b.cols) fail(ErrorKind::Shape, "asym: facet dimensions differ");
  double total = 0.0;
  for (std::size_t m = 0; m < b.rows; ++m) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < a.rows; ++k) best = std::max(best, nn::dot(a.row(k), b.row(m)));
    total += best;
  }
  return total / static_cast<double>(b.rows);
}

double asym(const FacetSet& a, const FacetSet& b) {
  return asym_normalized(a.normalized(), b.normalized());
}

double sim(const FacetSet& a, const FacetSet& b) {
  const nn::Mat an = a.normalized();
  const nn::Mat bn = b.normalized();
  return (asym_normalized(an, bn) + asym_normalized(bn, an)) / 2.0;
}

namespace {

DirectionCall call(double diff) {
  DirectionCall c;
  c.diff = diff;
  if (std::abs(diff) < kTieThreshold)
    c.premise = Premise::Tie;
  else
    c.premise = diff > 0 ? Premise::First : Premise::Second;
  return c;
}

}  // namespace

DirectionCall ours_diff(const FacetSet& a, const FacetSet& b) {
  const nn::Mat an = a.normalized();
  const nn::Mat bn = b.normalized();
  return call(asym_normalized(an, bn) - asym_normalized(bn, an));
}

DirectionCall freq_diff(double freq_a, double freq_b) { return call(freq_b - freq_a); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = nn::norm(a);
  const double nb = nn::norm(b);
  if (na < 1e-12 || nb < 1e-12) fail(ErrorKind::Numeric, "cosine of a zero vector");
  return nn::dot(a, b) / (na * nb);
}

ScoredPair score_pair(std::size_t i, std::size_t j, const FacetSet& a, const FacetSet& b) {
  const nn::Mat an = a.normalized();
  const nn::Mat bn = b.normalized();
  ScoredPair p;
  p.i = i;
  p.j = j;
  p.asym_ij = asym_normalized(an, bn);
  p.asym_ji = asym_normalized(bn, an);
  p.sim = (p.asym_ij + p.asym_ji) / 2.0;
  p.ours_diff = p.asym_ij - p.asym_ji;
  return p;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string scores_csv(const std::vector<ScoredPair>& pairs) {
  std::string out = "i,j,asym_ij,asym_ji,sim,ours_diff\n";
  for (const auto& p : pairs) {
    out += std::to_string(p.i) + "," + std::to_string(p.j) + "," + format_double(p.asym_ij) + "," +
           format_double(p.asym_ji) + "," + format_double(p.sim) + "," +
           format_double(p.ours_diff) + "\n";
  }
  return out;
}

}  // namespace mfus
