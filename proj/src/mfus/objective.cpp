#include "mfus/objective.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "mfus/error.hpp"

namespace mfus {

using nn::Mat;
using nn::Tensor;

namespace {

struct FacetFit {
  double eta = 0.0;
  double distance = 1.0;
};

// `e` must be unit length.
FacetFit fit_facet(std::span<const double> s, std::span<const double> e) {
  const double ss = nn::dot(s, s);
  if (std::sqrt(ss) < 1e-12) return {};
  const double eta = std::clamp(nn::dot(e, s) / ss, 0.0, 1.0);
  double d = 0.0;
  for (std::size_t c = 0; c < s.size(); ++c) {
    const double r = e[c] - eta * s[c];
    d += r * r;
  }
  return {eta, d};
}

}  // namespace

DistanceResult facet_distance(const Mat& facets, std::span<const double> entity) {
  if (facets.rows == 0) fail(ErrorKind::Shape, "facet_distance: empty facet set");
  if (facets.cols != entity.size())
    fail(ErrorKind::Shape, "facet_distance: facet and entity dimensions differ");
  const double n = nn::norm(entity);
  if (n < 1e-12) fail(ErrorKind::Numeric, "facet_distance: entity embedding has zero norm");
  std::vector<double> unit(entity.begin(), entity.end());
  for (double& v : unit) v /= n;

  DistanceResult out;
  out.eta.resize(facets.rows);
  out.facet_distances.resize(facets.rows);
  out.distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < facets.rows; ++k) {
    const FacetFit f = fit_facet(facets.row(k), unit);
    out.eta[k] = f.eta;
    out.facet_distances[k] = f.distance;
    if (f.distance < out.distance) {
      out.distance = f.distance;
      out.k_best = k;
    }
  }
  return out;
}

Tensor weighted_facet_distance(const Tensor& facets, const Tensor& unit_entities,
                               std::vector<double> coefficients) {
  const Mat& s = facets.value();
  const Mat& e = unit_entities.value();
  if (s.cols != e.cols) fail(ErrorKind::Shape, "facet and entity dimensions differ");
  if (coefficients.size() != e.rows)
    fail(ErrorKind::Shape, "one coefficient per entity row is required");
  if (s.rows == 0) fail(ErrorKind::Shape, "empty facet set");

  std::vector<std::size_t> best(e.rows);
  std::vector<double> eta(e.rows);
  double total = 0.0;
  for (std::size_t n = 0; n < e.rows; ++n) {
    FacetFit winner;
    winner.distance = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.rows; ++k) {
      const FacetFit f = fit_facet(s.row(k), e.row(n));
      if (f.distance < winner.distance) {
        winner = f;
        best[n] = k;
      }
    }
    eta[n] = winner.eta;
    total += coefficients[n] * winner.distance;
  }

  return nn::make_op(
      "facet_distance", Mat(1, 1, total), {facets, unit_entities},
      [s, e, best = std::move(best), eta = std::move(eta), c = std::move(coefficients)](
          const Mat& g, std::vector<Mat*>& pg) {
        const double up = g.data[0];
        for (std::size_t n = 0; n < e.rows; ++n) {
          const double a = eta[n];
          const auto sk = s.row(best[n]);
          const auto en = e.row(n);
          const double w = 2.0 * up * c[n];
          for (std::size_t col = 0; col < s.cols; ++col) {
            const double resid = en[col] - a * sk[col];
            if (pg[0]) (*pg[0])(best[n], col) -= w * a * resid;
            if (pg[1]) (*pg[1])(n, col) += w * resid;
          }
        }
      });
}

Tensor relational_loss(const Tensor& facets, const Tensor& entity_table,
                       std::span<const Sample> samples) {
  if (samples.empty()) return Tensor::constant(Mat(1, 1));
  std::vector<std::size_t> cols;
  std::vector<double> coef;
  cols.reserve(samples.size());
  coef.reserve(samples.size());
  for (const Sample& s : samples) {
    cols.push_back(s.col);
    coef.push_back((2.0 * s.y - 1.0) * s.weight);
  }
  const Tensor unit = nn::row_normalize(nn::gather_rows(entity_table, cols));
  return weighted_facet_distance(facets, unit, std::move(coef));
}

Tensor autoencoder_loss(const Tensor& facets, const Tensor& h, std::span<const double> sif_own,
                        std::span<const double> sif_other, double gamma) {
  if (gamma == 0.0) return Tensor::constant(Mat(1, 1));
  const Tensor mu = nn::mean_rows(facets);
  const Tensor own = apply_h(Tensor::constant(Mat::row_vector({sif_own.begin(), sif_own.end()})), h);
  const Tensor other =
      apply_h(Tensor::constant(Mat::row_vector({sif_other.begin(), sif_other.end()})), h);
  return nn::scale(nn::sub(nn::squared_norm(nn::sub(own, mu)),
                           nn::squared_norm(nn::sub(other, mu))),
                   gamma);
}

LossTerms batch_loss(const FacetModel& model, const CooccurrenceMatrix& m,
                     const BatchPlan& plan, const Mat& sif, const RegConfig& reg, bool train,
                     std::mt19937_64& rng) {
  std::map<std::size_t, std::vector<Sample>> by_row;
  for (const Sample& s : plan.samples) by_row[s.row].push_back(s);
  std::set<std::size_t> rows;
  for (const auto& [row, _] : by_row) rows.insert(row);
  for (const auto& [i, q] : plan.regularizer_pairs) rows.insert(i);

  std::map<std::size_t, Tensor> facets;
  for (std::size_t row : rows) {
    const SentencePattern& p = m.row(row);
    facets.emplace(row, model.facets(p.tokens, p.kind, train, rng));
  }

  LossTerms out;
  out.rows_forwarded = rows.size();
  std::vector<Tensor> parts;
  for (const auto& [row, samples] : by_row) {
    Tensor t = relational_loss(facets.at(row), model.entity_table(), samples);
    out.relational += t.item();
    parts.push_back(t);
  }
  if (reg.enabled && reg.gamma != 0.0) {
    for (const auto& [i, q] : plan.regularizer_pairs) {
      if (!reg.on_relations && m.row(i).kind == RowKind::KBRelation) continue;
      Tensor t = autoencoder_loss(facets.at(i), model.h_map(), sif.row(i), sif.row(q), reg.gamma);
      out.regularizer += t.item();
      parts.push_back(t);
    }
  }
  if (parts.empty()) {
    out.total = Tensor::constant(Mat(1, 1));
  } else {
    Tensor acc = parts[0];
    for (std::size_t n = 1; n < parts.size(); ++n) acc = nn::add(acc, parts[n]);
    out.total = acc;
  }
  if (!std::isfinite(out.total.item()))
    fail(ErrorKind::Numeric, "non-finite batch loss (relational " + std::to_string(out.relational) +
                                 ", regularizer " + std::to_string(out.regularizer) + ")");
  return out;
}

Mat sif_table(const CooccurrenceMatrix& m, const Mat& word_vectors, const Vocabulary& vocab,
              const WordStats& stats) {
  Mat out(m.row_count(), word_vectors.cols);
  for (std::size_t i = 0; i < m.row_count(); ++i) {
    const auto v = sif_average(m.row(i).tokens, word_vectors, vocab, stats);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace mfus
