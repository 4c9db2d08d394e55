#include "mfus/evalkit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/log.hpp"
#include "mfus/scoring.hpp"

namespace mfus {

REEvalSet REEvalSet::parse(const std::string& contents) {
  REEvalSet set;
  std::size_t line_no = 0;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    if (trim(raw).empty() || raw.front() == '#') continue;
    const auto f = split(raw, '\t');
    if (f.size() != 3)
      fail(ErrorKind::Parse, "eval set line " + std::to_string(line_no) + ": expected 3 fields");
    REInstance inst;
    inst.pattern = std::string(trim(f[0]));
    inst.entity_pair = std::string(trim(f[1]));
    if (!trim(f[2]).empty())
      for (const auto& r : split(trim(f[2]), '|'))
        if (!trim(r).empty()) inst.gold.emplace_back(trim(r));
    std::sort(inst.gold.begin(), inst.gold.end());
    inst.gold.erase(std::unique(inst.gold.begin(), inst.gold.end()), inst.gold.end());
    set.instances.push_back(std::move(inst));
  }
  return set;
}

REEvalSet REEvalSet::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string REEvalSet::serialize() const {
  std::string out;
  for (const auto& inst : instances) {
    out += inst.pattern + "\t" + inst.entity_pair + "\t";
    for (std::size_t n = 0; n < inst.gold.size(); ++n) out += (n ? "|" : "") + inst.gold[n];
    out += "\n";
  }
  return out;
}

std::vector<std::string> REEvalSet::relations() const {
  std::set<std::string> rels;
  for (const auto& inst : instances) rels.insert(inst.gold.begin(), inst.gold.end());
  return {rels.begin(), rels.end()};
}

nlohmann::json PRF::to_json() const {
  return {{"precision", precision}, {"recall", recall}, {"f1", f1},
          {"tp", tp},               {"fp", fp},         {"fn", fn}};
}

PRF prf_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF p;
  p.tp = tp;
  p.fp = fp;
  p.fn = fn;
  p.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  p.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  p.f1 = p.precision + p.recall == 0.0
             ? 0.0
             : 2.0 * p.precision * p.recall / (p.precision + p.recall);
  return p;
}

namespace {

void check_scores(const ScoreMatrix& scores, const REEvalSet& set, std::size_t relations) {
  if (scores.size() != set.instances.size())
    fail(ErrorKind::Shape, "one score row per instance is required");
  for (const auto& row : scores)
    if (row.size() != relations) fail(ErrorKind::Shape, "one score per relation is required");
}

bool has_gold(const REInstance& inst, const std::string& rel) {
  return std::binary_search(inst.gold.begin(), inst.gold.end(), rel);
}

}  // namespace

std::vector<double> tune_thresholds(const ScoreMatrix& scores, const REEvalSet& set,
                                    const std::vector<std::string>& relations) {
  check_scores(scores, set, relations.size());
  std::vector<double> out(relations.size(), kNeverFires);
  for (std::size_t r = 0; r < relations.size(); ++r) {
    std::vector<std::pair<double, bool>> items;
    std::size_t positives = 0;
    for (std::size_t n = 0; n < scores.size(); ++n) {
      const bool pos = has_gold(set.instances[n], relations[r]);
      positives += pos;
      items.emplace_back(scores[n][r], pos);
    }
    if (positives == 0) {
      warn("relation '" + relations[r] + "' has no positive validation instances; it never fires");
      continue;
    }
    // Descending sweep: each distinct score becomes the threshold once all
    // items at that score are included.
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t tp = 0, fp = 0;
    double best_f1 = -1.0;
    for (std::size_t n = 0; n < items.size();) {
      const double t = items[n].first;
      while (n < items.size() && items[n].first == t) {
        (items[n].second ? tp : fp) += 1;
        ++n;
      }
      const double f1 = prf_from_counts(tp, fp, positives - tp).f1;
      if (f1 >= best_f1) {
        best_f1 = f1;
        out[r] = t;
      }
    }
  }
  return out;
}

PRF evaluate_re(const ScoreMatrix& scores, const REEvalSet& set,
                const std::vector<std::string>& relations, const std::vector<double>& thresholds) {
  check_scores(scores, set, relations.size());
  if (thresholds.size() != relations.size())
    fail(ErrorKind::Shape, "one threshold per relation is required");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    for (std::size_t r = 0; r < relations.size(); ++r) {
      const bool predicted = scores[n][r] >= thresholds[r];
      const bool gold = has_gold(set.instances[n], relations[r]);
      if (predicted && gold) ++tp;
      if (predicted && !gold) ++fp;
      if (!predicted && gold) ++fn;
    }
  }
  return prf_from_counts(tp, fp, fn);
}

double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) fail(ErrorKind::Shape, "scores and labels differ in size");
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  if (n_pos == 0) fail(ErrorKind::EmptyInput, "average precision is undefined without positives");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!positive[order[k]]) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return total / static_cast<double>(n_pos);
}

double direction_credit(double diff) {
  if (std::abs(diff) < kTieThreshold) return 0.5;
  return diff > 0 ? 1.0 : 0.0;
}

nlohmann::json EntailEvalReport::to_json() const {
  return {{"ap_at_all", ap_at_all},
          {"micro_direction_acc", micro_direction_acc},
          {"macro_direction_acc", macro_direction_acc},
          {"candidates", candidates},
          {"positives", positives},
          {"direction_pairs", direction_pairs},
          {"tied_scores", tied_scores}};
}

EntailEvalReport evaluate_entailment(const std::vector<EntailmentCandidate>& cands,
                                     const std::vector<double>& classification,
                                     const std::vector<double>& direction) {
  if (classification.size() != cands.size() || direction.size() != cands.size())
    fail(ErrorKind::Shape, "one score per candidate is required");
  EntailEvalReport rep;
  rep.candidates = cands.size();
  std::vector<bool> positive;
  std::vector<double> scores;
  for (std::size_t n = 0; n < cands.size(); ++n) {
    if (cands[n].label == EntailLabel::Unlabeled) continue;
    positive.push_back(cands[n].label == EntailLabel::Entailment);
    scores.push_back(classification[n]);
  }
  rep.ap_at_all = average_precision(scores, positive);
  rep.positives = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  {
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t n = 1; n < sorted.size(); ++n) rep.tied_scores += sorted[n] == sorted[n - 1];
  }

  double credit = 0.0;
  std::map<std::string, std::pair<double, std::size_t>> per_word;
  for (std::size_t n = 0; n < cands.size(); ++n) {
    if (cands[n].label != EntailLabel::Entailment) continue;
    const double c = direction_credit(direction[n]);
    credit += c;
    auto& w = per_word[cands[n].replacing];
    w.first += c;
    w.second += 1;
    ++rep.direction_pairs;
  }
  if (rep.direction_pairs > 0) {
    rep.micro_direction_acc = credit / static_cast<double>(rep.direction_pairs);
    double macro = 0.0;
    for (const auto& [word, acc] : per_word) macro += acc.first / static_cast<double>(acc.second);
    rep.macro_direction_acc = macro / static_cast<double>(per_word.size());
  }
  return rep;
}

nn::Mat classical_mds(const std::vector<std::vector<double>>& points, std::size_t dims) {
  const std::size_t n = points.size();
  if (n < 3) fail(ErrorKind::EmptyInput, "MDS needs at least three points");
  const std::size_t d = points[0].size();
  for (const auto& p : points)
    if (p.size() != d) fail(ErrorKind::Shape, "MDS points differ in dimension");

  Eigen::MatrixXd sq(n, n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = points[a][c] - points[b][c];
        s += diff * diff;
      }
      sq(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = s;
    }
  }
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd gram = -0.5 * centering * sq * centering;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) fail(ErrorKind::Numeric, "MDS eigendecomposition failed");
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();

  nn::Mat out(n, dims);
  const double top = std::max(values(static_cast<Eigen::Index>(n - 1)), 0.0);
  for (std::size_t k = 0; k < dims; ++k) {
    const auto col = static_cast<Eigen::Index>(n - 1 - k);
    const double lambda = k < n ? values(col) : 0.0;
    if (k >= n || lambda <= 1e-10 * std::max(top, 1.0)) {
      warn("MDS input has rank below " + std::to_string(dims) + "; dimension " +
           std::to_string(k + 1) + " is set to zero");
      continue;
    }
    const double scale = std::sqrt(lambda);
    // Sign convention: the largest-magnitude entry of each axis is positive.
    Eigen::Index arg = 0;
    vectors.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = vectors(arg, col) < 0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r)
      out(r, k) = sign * scale * vectors(static_cast<Eigen::Index>(r), col);
  }
  return out;
}

std::vector<MdsPoint> project_mds(const std::vector<MdsInput>& inputs, const MdsOptions& options) {
  std::vector<const MdsInput*> kept;
  for (const auto& in : inputs)
    if (in.kind != "entity" || in.degree >= options.min_degree) kept.push_back(&in);
  std::vector<std::vector<double>> vecs;
  for (const auto* in : kept) vecs.push_back(in->vector);
  const nn::Mat coords = classical_mds(vecs, 2);

  std::vector<MdsPoint> points;
  std::vector<std::size_t> facet_idx, entity_idx;
  for (std::size_t n = 0; n < kept.size(); ++n) {
    points.push_back({kept[n]->label, kept[n]->kind, coords(n, 0), coords(n, 1)});
    (kept[n]->kind == "entity" ? entity_idx : facet_idx).push_back(n);
  }

  std::vector<bool> drop(points.size(), false);
  if (!facet_idx.empty() && !entity_idx.empty()) {
    std::vector<double> nearest;
    for (std::size_t e : entity_idx) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t f : facet_idx)
        best = std::min(best, std::hypot(points[e].x - points[f].x, points[e].y - points[f].y));
      nearest.push_back(best);
    }
    double threshold;
    if (options.far_threshold) {
      threshold = *options.far_threshold;
    } else {
      std::vector<double> sorted = nearest;
      std::sort(sorted.begin(), sorted.end());
      const auto idx = static_cast<std::size_t>(
          std::ceil(0.9 * static_cast<double>(sorted.size()))) - 1;
      threshold = sorted[std::min(idx, sorted.size() - 1)];
    }
    for (std::size_t n = 0; n < entity_idx.size(); ++n)
      if (nearest[n] > threshold) drop[entity_idx[n]] = true;
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(-options.jitter_eps, options.jitter_eps);
  std::vector<MdsPoint> out;
  for (std::size_t n = 0; n < points.size(); ++n) {
    if (drop[n]) continue;
    MdsPoint p = points[n];
    if (p.kind != "entity" && options.jitter_eps > 0.0) {
      p.x += jitter(rng);
      p.y += jitter(rng);
    }
    out.push_back(p);
  }
  return out;
}

std::string mds_csv(const std::vector<MdsPoint>& points) {
  std::string out = "label,kind,x,y\n";
  for (const auto& p : points) {
    std::string label = p.label;
    if (label.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : label) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      label = quoted + "\"";
    }
    out += label + "," + p.kind + "," + format_double(p.x) + "," + format_double(p.y) + "\n";
  }
  return out;
}

}  // namespace mfus
