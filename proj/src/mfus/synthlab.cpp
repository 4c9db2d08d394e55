#include "mfus/synthlab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/objective.hpp"
#include "mfus/scoring.hpp"

namespace mfus {

using nn::Mat;

void SynthSpec::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, "synth spec: " + msg);
  };
  need(relations >= 2, "at least two relations are required");
  need(dim >= relations, "dim must be at least the number of relations");
  need(f_max >= 1 && f_max <= relations, "f_max must lie in [1, relations]");
  need(pairs_per_relation >= std::max(pairs_per_facet, dominant_pairs),
       "pairs_per_relation must cover the pairs drawn per facet");
  need(pairs_per_facet >= 1 && dominant_pairs >= 1, "facets need at least one pair");
  need(markers_per_relation >= 1, "markers_per_relation must be positive");
  need(train_patterns >= 1, "train_patterns must be positive");
  need(word_dim >= 1, "word_dim must be positive");
  need(entail_pairs == 0 || f_max >= 2, "entailment pairs need f_max of at least 2");
  need(noise >= 0.0 && word_noise >= 0.0, "noise levels must be non-negative");
  need(distractors_per_pattern == 0 || distractors >= 1, "distractor pool is empty");
}

nlohmann::json SynthSpec::to_json() const {
  return {{"relations", relations},
          {"dim", dim},
          {"train_patterns", train_patterns},
          {"eval_patterns", eval_patterns},
          {"f_max", f_max},
          {"pairs_per_relation", pairs_per_relation},
          {"pairs_per_facet", pairs_per_facet},
          {"dominant_pairs", dominant_pairs},
          {"markers_per_relation", markers_per_relation},
          {"distractors", distractors},
          {"distractors_per_pattern", distractors_per_pattern},
          {"noise", noise},
          {"entail_pairs", entail_pairs},
          {"word_dim", word_dim},
          {"word_noise", word_noise},
          {"kb_relations", kb_relations},
          {"seed", seed}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  SynthSpec s;
  if (!j.is_object()) fail(ErrorKind::Config, "synth spec must be a JSON object");
  const nlohmann::json known = s.to_json();
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) fail(ErrorKind::Config, "unknown synth spec key '" + k + "'");
  try {
    s.relations = j.value("relations", s.relations);
    s.dim = j.value("dim", s.dim);
    s.train_patterns = j.value("train_patterns", s.train_patterns);
    s.eval_patterns = j.value("eval_patterns", s.eval_patterns);
    s.f_max = j.value("f_max", s.f_max);
    s.pairs_per_relation = j.value("pairs_per_relation", s.pairs_per_relation);
    s.pairs_per_facet = j.value("pairs_per_facet", s.pairs_per_facet);
    s.dominant_pairs = j.value("dominant_pairs", s.dominant_pairs);
    s.markers_per_relation = j.value("markers_per_relation", s.markers_per_relation);
    s.distractors = j.value("distractors", s.distractors);
    s.distractors_per_pattern = j.value("distractors_per_pattern", s.distractors_per_pattern);
    s.noise = j.value("noise", s.noise);
    s.entail_pairs = j.value("entail_pairs", s.entail_pairs);
    s.word_dim = j.value("word_dim", s.word_dim);
    s.word_noise = j.value("word_noise", s.word_noise);
    s.kb_relations = j.value("kb_relations", s.kb_relations);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string SynthData::relation_name(std::size_t f) { return "rel_" + std::to_string(f); }

namespace {

std::string marker(std::size_t f, std::size_t n) {
  return "m" + std::to_string(f) + "x" + std::to_string(n);
}

std::string distractor(std::size_t n) { return "dx" + std::to_string(n); }

std::string entity_name(std::size_t f, std::size_t n) {
  return "ep_" + std::to_string(f) + "_" + std::to_string(n);
}

void normalize(std::span<double> v) {
  const double n = nn::norm(v);
  if (n < 1e-12) fail(ErrorKind::Numeric, "cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t n = 0; n < tokens.size(); ++n) out += (n ? " " : "") + tokens[n];
  return out;
}

class Generator {
 public:
  explicit Generator(const SynthSpec& spec) : spec_(spec), rng_(spec.seed) {}

  std::vector<std::size_t> facet_set(std::size_t size) {
    std::vector<std::size_t> all(spec_.relations);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng_);
    all.resize(size);
    return all;
  }

  std::vector<std::size_t> random_facet_set() {
    std::uniform_int_distribution<std::size_t> size(1, spec_.f_max);
    return facet_set(size(rng_));
  }

  // $ARG1, one marker per facet in the given order with distractors mixed in, $ARG2.
  std::vector<std::string> tokens_for(const std::vector<std::size_t>& facets) {
    std::uniform_int_distribution<std::size_t> pick_marker(0, spec_.markers_per_relation - 1);
    std::vector<std::string> middle;
    for (std::size_t f : facets) middle.push_back(marker(f, pick_marker(rng_)));
    if (spec_.distractors > 0) {
      std::uniform_int_distribution<std::size_t> pick_dx(0, spec_.distractors - 1);
      for (std::size_t n = 0; n < spec_.distractors_per_pattern; ++n) {
        std::uniform_int_distribution<std::size_t> at(0, middle.size());
        middle.insert(middle.begin() + static_cast<std::ptrdiff_t>(at(rng_)),
                      distractor(pick_dx(rng_)));
      }
    }
    std::vector<std::string> out = {"$ARG1"};
    out.insert(out.end(), middle.begin(), middle.end());
    out.push_back("$ARG2");
    return out;
  }

  std::vector<std::size_t> draw_pairs(std::size_t count) {
    std::vector<std::size_t> ids(spec_.pairs_per_relation);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng_);
    ids.resize(count);
    return ids;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  const SynthSpec& spec_;
  std::mt19937_64 rng_;
};

}  // namespace

SynthData generate(const SynthSpec& spec) {
  spec.validate();
  Generator gen(spec);
  auto& rng = gen.rng();
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthData data;
  data.spec = spec;
  data.prototypes = Mat(spec.relations, spec.dim);
  for (std::size_t f = 0; f < spec.relations; ++f) {
    auto row = data.prototypes.row(f);
    for (double& v : row) v = gauss(rng);
    for (std::size_t g = 0; g < f; ++g) {
      const double proj = nn::dot(row, data.prototypes.row(g));
      for (std::size_t c = 0; c < spec.dim; ++c) row[c] -= proj * data.prototypes(g, c);
    }
    normalize(row);
  }
  std::vector<std::vector<std::vector<double>>> entity_pool(spec.relations);
  for (std::size_t f = 0; f < spec.relations; ++f) {
    for (std::size_t n = 0; n < spec.pairs_per_relation; ++n) {
      std::vector<double> v(data.prototypes.row(f).begin(), data.prototypes.row(f).end());
      if (spec.noise > 0.0) {
        for (double& x : v) x += spec.noise * gauss(rng);
        normalize(v);
      }
      entity_pool[f].push_back(std::move(v));
    }
  }

  std::vector<CooccurrenceMatrix::Record> records;
  std::vector<std::vector<std::size_t>> pattern_facets;  // by record-order pattern index
  std::set<std::vector<std::string>> used;
  std::vector<std::vector<std::string>> pattern_tokens;
  auto add_pattern = [&](const std::vector<std::string>& tokens,
                         const std::vector<std::size_t>& facets) {
    const std::string text = join(tokens);
    for (std::size_t n = 0; n < facets.size(); ++n) {
      const std::size_t count = n == 0 ? spec.dominant_pairs : spec.pairs_per_facet;
      for (std::size_t p : gen.draw_pairs(count))
        records.push_back({RowKind::Pattern, text, entity_name(facets[n], p)});
    }
    used.insert(tokens);
    pattern_tokens.push_back(tokens);
    pattern_facets.push_back(facets);
  };
  auto fresh_tokens = [&](const std::vector<std::size_t>& facets) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      auto tokens = gen.tokens_for(facets);
      if (!used.count(tokens)) return tokens;
    }
    fail(ErrorKind::Config, "synth spec: could not draw enough distinct patterns");
  };

  for (std::size_t n = 0; n < spec.train_patterns; ++n) {
    const auto facets = gen.random_facet_set();
    add_pattern(fresh_tokens(facets), facets);
  }

  // Entailment pairs: the specific pattern repeats the general one's markers
  // and adds one marker of a further relation.
  struct PairIdx {
    std::size_t specific, general, extra;
    std::string extra_marker;
  };
  std::vector<PairIdx> entail_idx;
  // The specific side adds one facet, so the general side stays below f_max.
  const std::size_t general_max = spec.f_max - 1;
  for (std::size_t n = 0; n < spec.entail_pairs && general_max >= 1; ++n) {
    std::uniform_int_distribution<std::size_t> size(1, general_max);
    auto facets = gen.facet_set(size(rng) + 1);
    const std::size_t extra = facets.back();
    facets.pop_back();
    const auto general = fresh_tokens(facets);
    std::vector<std::string> specific;
    std::string extra_marker;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::uniform_int_distribution<std::size_t> pick_marker(0, spec.markers_per_relation - 1);
      std::uniform_int_distribution<std::size_t> at(1, general.size() - 1);
      extra_marker = marker(extra, pick_marker(rng));
      specific = general;
      specific.insert(specific.begin() + static_cast<std::ptrdiff_t>(at(rng)), extra_marker);
      if (!used.count(specific) && specific != general) break;
      specific.clear();
    }
    if (specific.empty()) fail(ErrorKind::Config, "synth spec: could not draw entailment pairs");
    add_pattern(general, facets);
    auto specific_facets = facets;
    specific_facets.push_back(extra);
    add_pattern(specific, specific_facets);
    entail_idx.push_back({pattern_tokens.size() - 1, pattern_tokens.size() - 2, extra, extra_marker});
  }

  if (spec.kb_relations) {
    for (std::size_t f = 0; f < spec.relations; ++f)
      for (std::size_t p = 0; p < spec.pairs_per_relation; ++p)
        records.push_back({RowKind::KBRelation, SynthData::relation_name(f), entity_name(f, p)});
  }
  data.matrix = CooccurrenceMatrix::from_records(records);

  data.row_relations.resize(data.matrix.row_count());
  for (std::size_t n = 0; n < pattern_tokens.size(); ++n) {
    auto row = data.matrix.find_row(RowKind::Pattern, join(pattern_tokens[n]));
    auto facets = pattern_facets[n];
    std::sort(facets.begin(), facets.end());
    data.row_relations[*row] = facets;
  }
  if (spec.kb_relations)
    for (std::size_t f = 0; f < spec.relations; ++f)
      data.row_relations[*data.matrix.find_row(RowKind::KBRelation, SynthData::relation_name(f))] = {f};

  data.entity_vectors = Mat(data.matrix.col_count(), spec.dim);
  data.entity_relation.resize(data.matrix.col_count());
  for (std::size_t j = 0; j < data.matrix.col_count(); ++j) {
    const std::string& name = data.matrix.cols().names[j];
    const auto parts = split(name, '_');
    const std::size_t f = std::stoul(parts[1]);
    const std::size_t p = std::stoul(parts[2]);
    data.entity_relation[j] = f;
    std::copy(entity_pool[f][p].begin(), entity_pool[f][p].end(), data.entity_vectors.row(j).begin());
  }

  auto eval_split = [&](REEvalSet& set) {
    for (std::size_t n = 0; n < spec.eval_patterns; ++n) {
      auto facets = gen.random_facet_set();
      const auto tokens = fresh_tokens(facets);
      used.insert(tokens);
      std::uniform_int_distribution<std::size_t> pick_facet(0, facets.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_pair(0, spec.pairs_per_relation - 1);
      const std::size_t f = facets[pick_facet(rng)];
      REInstance inst;
      inst.pattern = join(tokens);
      inst.entity_pair = entity_name(f, pick_pair(rng));
      std::sort(facets.begin(), facets.end());
      for (std::size_t g : facets) inst.gold.push_back(SynthData::relation_name(g));
      std::sort(inst.gold.begin(), inst.gold.end());
      set.instances.push_back(std::move(inst));
    }
  };
  eval_split(data.validation);
  eval_split(data.test);

  auto freq_of = [&](const std::vector<std::string>& tokens) {
    return data.matrix.pattern_freq(*data.matrix.find_row(RowKind::Pattern, join(tokens)));
  };
  for (const auto& e : entail_idx) {
    EntailmentCandidate c;
    c.premise = join(pattern_tokens[e.specific]);
    c.hypothesis = join(pattern_tokens[e.general]);
    c.replaced = e.extra_marker;
    c.replacing = SynthData::relation_name(e.extra);
    c.freq_premise = freq_of(pattern_tokens[e.specific]);
    c.freq_hypothesis = freq_of(pattern_tokens[e.general]);
    c.candidate_freq = std::min(c.freq_premise, c.freq_hypothesis);
    c.split = "test";
    c.label = EntailLabel::Entailment;
    data.entailment.push_back(std::move(c));
  }
  // Unrelated pairs: training patterns with disjoint relation sets.
  if (!entail_idx.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, spec.train_patterns - 1);
    std::size_t made = 0;
    for (int attempt = 0; made < entail_idx.size() && attempt < 100000; ++attempt) {
      const std::size_t a = pick(rng), b = pick(rng);
      std::vector<std::size_t> fa = pattern_facets[a], fb = pattern_facets[b];
      std::sort(fa.begin(), fa.end());
      std::sort(fb.begin(), fb.end());
      std::vector<std::size_t> both;
      std::set_intersection(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(both));
      if (a == b || !both.empty()) continue;
      EntailmentCandidate c;
      c.premise = join(pattern_tokens[a]);
      c.hypothesis = join(pattern_tokens[b]);
      c.replaced = "-";
      c.replacing = "-";
      c.freq_premise = freq_of(pattern_tokens[a]);
      c.freq_hypothesis = freq_of(pattern_tokens[b]);
      c.candidate_freq = std::min(c.freq_premise, c.freq_hypothesis);
      c.split = "test";
      c.label = EntailLabel::Other;
      data.entailment.push_back(std::move(c));
      ++made;
    }
  }

  // Word vectors: markers and relation names follow a fixed random image of
  // their relation prototype; distractors are pure noise.
  Mat proj(spec.word_dim, spec.dim);
  for (double& v : proj.data) v = gauss(rng) / std::sqrt(static_cast<double>(spec.word_dim));
  auto image = [&](std::size_t f) {
    std::vector<double> v(spec.word_dim, 0.0);
    for (std::size_t r = 0; r < spec.word_dim; ++r) v[r] = nn::dot(proj.row(r), data.prototypes.row(f));
    normalize(v);
    return v;
  };
  auto emit = [&](const std::string& token, std::vector<double> v) {
    data.embeddings_text += token;
    for (double x : v) data.embeddings_text += " " + format_double(x);
    data.embeddings_text += "\n";
  };
  for (std::size_t f = 0; f < spec.relations; ++f) {
    const auto base = image(f);
    emit(SynthData::relation_name(f), base);
    for (std::size_t n = 0; n < spec.markers_per_relation; ++n) {
      auto v = base;
      for (double& x : v) x += spec.word_noise * gauss(rng) / std::sqrt(static_cast<double>(spec.word_dim));
      emit(marker(f, n), v);
    }
  }
  for (std::size_t n = 0; n < spec.distractors; ++n) {
    std::vector<double> v(spec.word_dim);
    for (double& x : v) x = gauss(rng) / std::sqrt(static_cast<double>(spec.word_dim));
    emit(distractor(n), v);
  }
  return data;
}

nlohmann::json SynthData::truth_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < matrix.row_count(); ++i) {
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t f : row_relations[i]) names.push_back(relation_name(f));
    rows.push_back({{"row", i},
                    {"kind", matrix.row(i).kind == RowKind::Pattern ? "P" : "R"},
                    {"text", matrix.row(i).text},
                    {"relations", names}});
  }
  nlohmann::json entities = nlohmann::json::object();
  for (std::size_t j = 0; j < matrix.col_count(); ++j)
    entities[matrix.cols().names[j]] = relation_name(entity_relation[j]);
  nlohmann::json protos = nlohmann::json::array();
  for (std::size_t f = 0; f < prototypes.rows; ++f)
    protos.push_back(std::vector<double>(prototypes.row(f).begin(), prototypes.row(f).end()));
  return {{"spec", spec.to_json()}, {"rows", rows}, {"entities", entities}, {"prototypes", protos}};
}

void SynthData::write(const std::filesystem::path& dir) const {
  write_file(dir / "cooccur.tsv", matrix.serialize());
  write_file(dir / "eval_validation.tsv", validation.serialize());
  write_file(dir / "eval_test.tsv", test.serialize());
  write_file(dir / "entail.tsv", candidates_tsv(entailment));
  write_file(dir / "embeddings.txt", embeddings_text);
  write_file(dir / "truth.json", truth_json().dump(2) + "\n");
}

EtaOracle oracle_eta_grid(const Mat& facets, std::span<const double> entity, double grid) {
  if (!(grid > 0.0 && grid <= 1.0)) fail(ErrorKind::Config, "grid step must lie in (0,1]");
  if (facets.cols != entity.size()) fail(ErrorKind::Shape, "facet and entity dimensions differ");
  const double n = nn::norm(entity);
  if (n < 1e-12) fail(ErrorKind::Numeric, "entity embedding has zero norm");
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / grid));
  EtaOracle best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < facets.rows; ++k) {
    for (std::size_t s = 0; s <= steps; ++s) {
      const double eta = s == steps ? 1.0 : static_cast<double>(s) * grid;
      double d = 0.0;
      for (std::size_t c = 0; c < facets.cols; ++c) {
        const double r = entity[c] / n - eta * facets(k, c);
        d += r * r;
      }
      if (d < best.distance) best = {d, eta, k};
    }
  }
  return best;
}

namespace {

std::vector<std::vector<double>> unit_points(const std::vector<std::vector<double>>& points) {
  std::vector<std::vector<double>> out = points;
  for (auto& p : out) normalize(p);
  return out;
}

}  // namespace

Mat oracle_spherical_kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                            std::size_t restarts, std::uint64_t seed) {
  if (k == 0) fail(ErrorKind::Config, "k must be positive");
  if (k > points.size()) fail(ErrorKind::Config, "k exceeds the number of points");
  const auto pts = unit_points(points);
  const std::size_t d = pts[0].size();
  std::mt19937_64 rng(seed);
  Mat best;
  double best_obj = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(1, restarts); ++r) {
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Mat centers(k, d);
    for (std::size_t c = 0; c < k; ++c)
      std::copy(pts[idx[c]].begin(), pts[idx[c]].end(), centers.row(c).begin());
    std::vector<std::size_t> assign(pts.size(), k);
    for (int iter = 0; iter < 200; ++iter) {
      bool changed = false;
      for (std::size_t n = 0; n < pts.size(); ++n) {
        std::size_t arg = 0;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
          const double cs = nn::dot(centers.row(c), pts[n]);
          if (cs > top) {
            top = cs;
            arg = c;
          }
        }
        changed |= assign[n] != arg;
        assign[n] = arg;
      }
      if (!changed) break;
      Mat sums(k, d);
      for (std::size_t n = 0; n < pts.size(); ++n)
        for (std::size_t c = 0; c < d; ++c) sums(assign[n], c) += pts[n][c];
      for (std::size_t c = 0; c < k; ++c) {
        if (nn::norm(sums.row(c)) < 1e-12) continue;  // empty cluster keeps its center
        normalize(sums.row(c));
        std::copy(sums.row(c).begin(), sums.row(c).end(), centers.row(c).begin());
      }
    }
    double obj = 0.0;
    for (const auto& p : pts) {
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) top = std::max(top, nn::dot(centers.row(c), p));
      obj += top;
    }
    if (obj > best_obj) {
      best_obj = obj;
      best = centers;
    }
  }
  return best;
}

Mat fit_free_facets(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::size_t steps, double lr, std::uint64_t seed) {
  if (k == 0 || k > points.size()) fail(ErrorKind::Config, "k must lie in [1, points]");
  const auto pts = unit_points(points);
  const std::size_t d = pts[0].size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);

  std::vector<std::size_t> chosen = {pick(rng)};
  while (chosen.size() < k) {
    std::size_t arg = 0;
    double lowest = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < pts.size(); ++n) {
      double closest = -std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen) closest = std::max(closest, nn::dot(pts[c], pts[n]));
      if (closest < lowest) {
        lowest = closest;
        arg = n;
      }
    }
    chosen.push_back(arg);
  }
  Mat init(k, d);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t x = 0; x < d; ++x) init(c, x) = 0.5 * pts[chosen[c]][x];

  Mat ents(pts.size(), d);
  for (std::size_t n = 0; n < pts.size(); ++n) std::copy(pts[n].begin(), pts[n].end(), ents.row(n).begin());
  nn::Tensor facets = nn::Tensor::leaf(init, true);
  const nn::Tensor entities = nn::Tensor::constant(ents);
  const std::vector<double> coef(pts.size(), 1.0 / static_cast<double>(pts.size()));
  for (std::size_t s = 0; s < steps; ++s) {
    facets.zero_grad();
    nn::backward(weighted_facet_distance(facets, entities, coef));
    Mat& w = facets.mutable_value();
    const Mat& g = facets.grad();
    for (std::size_t n = 0; n < w.size(); ++n) w.data[n] -= lr * g.data[n];
  }
  return facets.value();
}

ClusterSample sample_clusters(std::size_t clusters, std::size_t per_cluster, std::size_t dim,
                              double sigma, std::uint64_t seed) {
  if (clusters == 0 || dim == 0) fail(ErrorKind::Config, "clusters and dim must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ClusterSample out;
  while (out.centers.size() < clusters) {
    std::vector<double> c(dim);
    for (double& v : c) v = gauss(rng);
    normalize(c);
    bool separated = true;
    for (const auto& other : out.centers) separated &= std::abs(nn::dot(c, other)) <= 0.5;
    if (separated) out.centers.push_back(std::move(c));
  }
  for (const auto& c : out.centers) {
    for (std::size_t n = 0; n < per_cluster; ++n) {
      std::vector<double> p = c;
      for (double& v : p) v += sigma * gauss(rng);
      normalize(p);
      out.points.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace mfus
