#include "mfus/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "mfus/embed.hpp"
#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/log.hpp"
#include "mfus/objective.hpp"
#include "mfus/scoring.hpp"
#include "mfus/synthlab.hpp"

namespace mfus {

using nlohmann::json;
namespace fs = std::filesystem;

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(1, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void FacetCache::prefetch(const std::vector<std::pair<std::string, RowKind>>& items,
                          std::size_t threads) {
  std::vector<std::pair<std::string, RowKind>> todo;
  for (const auto& it : items)
    if (!cache_.count(it) && std::find(todo.begin(), todo.end(), it) == todo.end())
      todo.push_back(it);
  std::vector<FacetSet> results(todo.size());
  parallel_for(todo.size(), threads, [&](std::size_t n) {
    results[n] = model_.infer(tokenize(todo[n].first), todo[n].second);
  });
  for (std::size_t n = 0; n < todo.size(); ++n) cache_.emplace(todo[n], std::move(results[n]));
}

const FacetSet& FacetCache::get(const std::string& text, RowKind kind) {
  auto key = std::make_pair(text, kind);
  auto it = cache_.find(key);
  if (it == cache_.end()) it = cache_.emplace(key, model_.infer(tokenize(text), kind)).first;
  return it->second;
}

ScoreMatrix re_scores(const FacetModel& model, const REEvalSet& set,
                      const std::vector<std::string>& relations, std::size_t threads,
                      const FactorModel* uschema, const CooccurrenceMatrix* matrix) {
  if (uschema && !matrix) fail(ErrorKind::Config, "the ensemble needs the training matrix");
  FacetCache cache(model);
  std::vector<std::pair<std::string, RowKind>> items;
  for (const auto& r : relations) items.emplace_back(r, RowKind::KBRelation);
  for (const auto& inst : set.instances)
    if (!tokenize(inst.pattern).empty()) items.emplace_back(inst.pattern, RowKind::Pattern);
  cache.prefetch(items, threads);

  std::vector<std::optional<std::size_t>> rel_rows;
  for (const auto& r : relations)
    rel_rows.push_back(matrix ? matrix->find_row(RowKind::KBRelation, r) : std::nullopt);

  ScoreMatrix scores(set.instances.size(), std::vector<double>(relations.size(), 0.0));
  for (std::size_t n = 0; n < set.instances.size(); ++n) {
    const auto& inst = set.instances[n];
    if (tokenize(inst.pattern).empty()) {
      warn("eval instance " + std::to_string(n) + " has an empty pattern; it never fires");
      std::fill(scores[n].begin(), scores[n].end(), -std::numeric_limits<double>::infinity());
      continue;
    }
    const FacetSet& p = cache.get(inst.pattern, RowKind::Pattern);
    std::optional<std::size_t> prow;
    if (uschema) prow = matrix->find_row(RowKind::Pattern, inst.pattern);
    for (std::size_t r = 0; r < relations.size(); ++r) {
      double s = sim(p, cache.get(relations[r], RowKind::KBRelation));
      if (uschema && prow && rel_rows[r]) s = ensemble_max(s, uschema->row_cosine(*prow, *rel_rows[r]));
      scores[n][r] = s;
    }
  }
  return scores;
}

ReOutcome evaluate_re_pipeline(const FacetModel& model, const REEvalSet& validation,
                               const REEvalSet& test, std::size_t threads,
                               const FactorModel* uschema, const CooccurrenceMatrix* matrix) {
  ReOutcome out;
  std::set<std::string> rels;
  for (const auto& r : validation.relations()) rels.insert(r);
  for (const auto& r : test.relations()) rels.insert(r);
  out.relations.assign(rels.begin(), rels.end());
  const ScoreMatrix val_scores = re_scores(model, validation, out.relations, threads, uschema, matrix);
  out.thresholds = tune_thresholds(val_scores, validation, out.relations);
  out.validation = evaluate_re(val_scores, validation, out.relations, out.thresholds);
  const ScoreMatrix test_scores = re_scores(model, test, out.relations, threads, uschema, matrix);
  out.test = evaluate_re(test_scores, test, out.relations, out.thresholds);
  return out;
}

EntailScores entail_scores(const FacetModel& model, const std::vector<EntailmentCandidate>& cands,
                           std::size_t threads) {
  FacetCache cache(model);
  std::vector<std::pair<std::string, RowKind>> items;
  for (const auto& c : cands) {
    items.emplace_back(c.premise, RowKind::Pattern);
    items.emplace_back(c.hypothesis, RowKind::Pattern);
  }
  cache.prefetch(items, threads);
  EntailScores out;
  for (const auto& c : cands) {
    const FacetSet& p = cache.get(c.premise, RowKind::Pattern);
    const FacetSet& h = cache.get(c.hypothesis, RowKind::Pattern);
    out.classification.push_back(asym(p, h));
    out.direction.push_back(ours_diff(p, h).diff);
    out.freq_direction.push_back(freq_diff(static_cast<double>(c.freq_premise),
                                           static_cast<double>(c.freq_hypothesis))
                                     .diff);
  }
  return out;
}

nn::Mat word_vectors_for(const Vocabulary& vocab, const std::optional<std::string>& path,
                         std::size_t d_word, std::uint64_t seed, double* coverage) {
  PretrainedEmbeddings e = path ? load_embedding_file(*path, vocab, seed)
                                : random_embeddings(vocab, d_word, seed);
  if (e.matrix.cols != d_word)
    fail(ErrorKind::Config, "embedding file has dimension " + std::to_string(e.matrix.cols) +
                                " but d_word is " + std::to_string(d_word));
  if (coverage) *coverage = e.coverage;
  return std::move(e.matrix);
}

namespace {

std::optional<std::string> opt_string(const json& opts, const char* key) {
  if (!opts.contains(key) || opts[key].is_null()) return std::nullopt;
  if (!opts[key].is_string()) fail(ErrorKind::Config, std::string("option '") + key + "' must be a string");
  return opts[key].get<std::string>();
}

std::string need_string(const json& opts, const char* key, const std::string& command) {
  auto v = opt_string(opts, key);
  if (!v) fail(ErrorKind::Config, command + " needs --" + std::string(key));
  return *v;
}

std::size_t threads_of(const json& opts) {
  return opts.contains("threads") ? opts["threads"].get<std::size_t>() : 1;
}

fs::path out_dir(const json& opts, const std::string& command) {
  return fs::path(need_string(opts, "out", command));
}

json section(const RunConfig& cfg, const char* name) {
  return cfg.extra.contains(name) ? cfg.extra[name] : json::object();
}

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

  void input(const std::string& name, const std::optional<std::string>& path) {
    if (!path) return;
    inputs_[name] = {{"path", *path}, {"sha256", sha256_hex(read_file(*path))}};
  }

  void output(const fs::path& dir, const std::string& file) {
    outputs_[file] = sha256_hex(read_file(dir / file));
  }

  void write(const fs::path& dir) const {
    const json config = cfg_.to_json();
    json m = {{"command", command_},
              {"version", kVersion},
              {"container_version", kContainerVersion},
              {"config", config},
              {"config_sha256", sha256_hex(config.dump())},
              {"seed", cfg_.seed},
              {"inputs", inputs_},
              {"outputs", outputs_}};
    write_file(dir / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  json inputs_ = json::object();
  json outputs_ = json::object();
};

json cmd_train(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto matrix_path = need_string(opts, "matrix", "train");
  const auto emb_path = opt_string(opts, "embeddings");
  const auto split_path = opt_string(opts, "split");
  const fs::path out = out_dir(opts, "train");

  const CooccurrenceMatrix m = CooccurrenceMatrix::load(matrix_path);
  const SplitAssignment split = split_path ? SplitAssignment::load(*split_path, m)
                                           : split_validation(m, cfg.validation_fraction,
                                                              derive_seed(cfg.seed, 0x73706c));
  const Vocabulary vocab = Vocabulary::from_matrix(m);
  double coverage = 0.0;
  const nn::Mat words = word_vectors_for(vocab, emb_path, cfg.model.d_word,
                                         derive_seed(cfg.seed, 0x656d62), &coverage);

  json timing = json::array();
  TrainResult result = train(m, split, vocab, words, cfg, [&](const EpochRecord& e) {
    timing.push_back({{"epoch", e.epoch}, {"seconds", e.seconds}});
  });
  fs::create_directories(out);
  save_checkpoint(result.model, out / "model.mfus");
  write_file(out / "train_report.jsonl", result.report.to_jsonl(false));
  write_file(out / "split.txt", split.serialize());
  write_file(out / "timing.json", timing.dump() + "\n");

  Manifest man("train", cfg);
  man.input("matrix", matrix_path);
  man.input("embeddings", emb_path);
  man.input("split", split_path);
  for (const char* f : {"model.mfus", "train_report.jsonl", "split.txt"}) man.output(out, f);
  man.write(out);
  return {{"checkpoint", (out / "model.mfus").string()},
          {"selected_epoch", result.report.selected_epoch},
          {"parameter_count", result.report.parameter_count},
          {"embedding_coverage", coverage},
          {"epochs", result.report.epochs.size()}};
}

json cmd_uschema_train(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto matrix_path = need_string(opts, "matrix", "uschema-train");
  const fs::path out = out_dir(opts, "uschema-train");
  const CooccurrenceMatrix m = CooccurrenceMatrix::load(matrix_path);
  UschemaConfig uc;
  uc.dim = cfg.model.d_entity;
  uc.epochs = cfg.uschema_epochs;
  uc.lr = cfg.uschema_lr;
  uc.negatives_per_positive = std::max<std::size_t>(1, cfg.negatives_per_positive);
  uc.seed = derive_seed(cfg.seed, 0x7573);
  const FactorModel fm = train_uschema(m, uc);
  fs::create_directories(out);
  save_uschema(fm, out / "uschema.mfus");
  Manifest man("uschema-train", cfg);
  man.input("matrix", matrix_path);
  man.output(out, "uschema.mfus");
  man.write(out);
  return {{"checkpoint", (out / "uschema.mfus").string()}, {"dim", fm.dim()}};
}

json cmd_eval_re(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto ckpt = need_string(opts, "checkpoint", "eval-re");
  const auto val_path = need_string(opts, "eval_validation", "eval-re");
  const auto test_path = need_string(opts, "eval_test", "eval-re");
  const auto us_path = opt_string(opts, "uschema");
  const auto matrix_path = opt_string(opts, "matrix");
  const fs::path out = out_dir(opts, "eval-re");
  const std::size_t threads = threads_of(opts);

  const FacetModel model = load_checkpoint(ckpt);
  const REEvalSet val = REEvalSet::load(val_path);
  const REEvalSet test = REEvalSet::load(test_path);
  const ReOutcome single = evaluate_re_pipeline(model, val, test, threads);

  json thresholds = json::object();
  for (std::size_t r = 0; r < single.relations.size(); ++r)
    thresholds[single.relations[r]] =
        std::isinf(single.thresholds[r]) ? json("inf") : json(single.thresholds[r]);
  json report = {{"relations", single.relations},
                 {"thresholds", thresholds},
                 {"validation", single.validation.to_json()},
                 {"test", single.test.to_json()}};
  if (us_path) {
    if (!matrix_path) fail(ErrorKind::Config, "the ensemble needs --matrix");
    const FactorModel fm = load_uschema(*us_path);
    const CooccurrenceMatrix m = CooccurrenceMatrix::load(*matrix_path);
    if (fm.rows.rows != m.row_count())
      fail(ErrorKind::Shape, "USchema checkpoint does not match the matrix rows");
    const ReOutcome ens = evaluate_re_pipeline(model, val, test, threads, &fm, &m);
    report["ensemble"] = {{"validation", ens.validation.to_json()}, {"test", ens.test.to_json()}};
  }
  fs::create_directories(out);
  write_file(out / "re_report.json", report.dump(2) + "\n");
  Manifest man("eval-re", cfg);
  man.input("checkpoint", ckpt);
  man.input("eval_validation", val_path);
  man.input("eval_test", test_path);
  man.input("uschema", us_path);
  man.input("matrix", matrix_path);
  man.output(out, "re_report.json");
  man.write(out);
  return report;
}

json cmd_eval_entail(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto ckpt = need_string(opts, "checkpoint", "eval-entail");
  const auto cand_path = need_string(opts, "candidates", "eval-entail");
  const auto ann_path = opt_string(opts, "annotations");
  const fs::path out = out_dir(opts, "eval-entail");

  const FacetModel model = load_checkpoint(ckpt);
  std::vector<EntailmentCandidate> cands = parse_candidates_tsv(read_file(cand_path));
  if (ann_path) merge_annotations(cands, read_file(*ann_path));
  const EntailScores s = entail_scores(model, cands, threads_of(opts));
  const EntailEvalReport ours = evaluate_entailment(cands, s.classification, s.direction);
  const EntailEvalReport freq = evaluate_entailment(cands, s.classification, s.freq_direction);
  json report = {{"ours", ours.to_json()},
                 {"freq_diff",
                  {{"micro_direction_acc", freq.micro_direction_acc},
                   {"macro_direction_acc", freq.macro_direction_acc}}}};
  std::string scores = "premise\thypothesis\tasym\tours_diff\tfreq_diff\n";
  for (std::size_t n = 0; n < cands.size(); ++n)
    scores += cands[n].premise + "\t" + cands[n].hypothesis + "\t" + format_double(s.classification[n]) +
              "\t" + format_double(s.direction[n]) + "\t" + format_double(s.freq_direction[n]) + "\n";
  fs::create_directories(out);
  write_file(out / "entail_report.json", report.dump(2) + "\n");
  write_file(out / "entail_scores.tsv", scores);
  Manifest man("eval-entail", cfg);
  man.input("checkpoint", ckpt);
  man.input("candidates", cand_path);
  man.input("annotations", ann_path);
  man.output(out, "entail_report.json");
  man.output(out, "entail_scores.tsv");
  man.write(out);
  return report;
}

json cmd_score(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto ckpt = need_string(opts, "checkpoint", "score");
  const auto matrix_path = need_string(opts, "matrix", "score");
  const auto pairs_path = opt_string(opts, "pairs");
  const fs::path out = out_dir(opts, "score");

  const FacetModel model = load_checkpoint(ckpt);
  const CooccurrenceMatrix m = CooccurrenceMatrix::load(matrix_path);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (pairs_path) {
    std::size_t line_no = 0;
    for (const auto& raw : lines(read_file(*pairs_path))) {
      ++line_no;
      if (trim(raw).empty() || raw.front() == '#') continue;
      const auto f = split(raw, '\t');
      std::size_t a = 0, b = 0;
      try {
        if (f.size() != 2) throw std::invalid_argument("arity");
        a = std::stoul(f[0]);
        b = std::stoul(f[1]);
      } catch (const std::exception&) {
        fail(ErrorKind::Parse, "pairs line " + std::to_string(line_no) + ": expected 'i<TAB>j'");
      }
      if (a >= m.row_count() || b >= m.row_count())
        fail(ErrorKind::Parse, "pairs line " + std::to_string(line_no) + ": row out of range");
      pairs.emplace_back(a, b);
    }
  } else {
    for (std::size_t i : m.rows_of_kind(RowKind::Pattern))
      for (std::size_t j : m.rows_of_kind(RowKind::KBRelation)) pairs.emplace_back(i, j);
  }
  FacetCache cache(model);
  std::vector<std::pair<std::string, RowKind>> items;
  for (const auto& [a, b] : pairs) {
    items.emplace_back(m.row(a).text, m.row(a).kind);
    items.emplace_back(m.row(b).text, m.row(b).kind);
  }
  cache.prefetch(items, threads_of(opts));
  std::vector<ScoredPair> scored;
  for (const auto& [a, b] : pairs)
    scored.push_back(score_pair(a, b, cache.get(m.row(a).text, m.row(a).kind),
                                cache.get(m.row(b).text, m.row(b).kind)));
  fs::create_directories(out);
  write_file(out / "scores.csv", scores_csv(scored));
  Manifest man("score", cfg);
  man.input("checkpoint", ckpt);
  man.input("matrix", matrix_path);
  man.input("pairs", pairs_path);
  man.output(out, "scores.csv");
  man.write(out);
  return {{"pairs", scored.size()}, {"scores", (out / "scores.csv").string()}};
}

json cmd_entail_mine(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto matrix_path = need_string(opts, "matrix", "entail-mine");
  const auto lex_path = need_string(opts, "lexicon", "entail-mine");
  const auto ann_path = opt_string(opts, "annotations");
  const fs::path out = out_dir(opts, "entail-mine");
  const json sec = section(cfg, "entail");
  const long long n = sec.value("n", 1500LL);
  const double val_fraction = sec.value("val_fraction", 0.2);

  const CooccurrenceMatrix m = CooccurrenceMatrix::load(matrix_path);
  const HypernymLexicon lex = HypernymLexicon::load(lex_path);
  const auto mined = mine_candidates(m, lex);
  const auto kept = exclude_mutual(mined, lex);
  const Selection sel = rank_and_select(kept, n);
  EntailSplit sp = split_by_hypernym(sel.selected, val_fraction, derive_seed(cfg.seed, 0x656e74));
  std::vector<EntailmentCandidate> all = sp.validation;
  all.insert(all.end(), sp.test.begin(), sp.test.end());
  if (ann_path) merge_annotations(all, read_file(*ann_path));

  json groups = json::array();
  for (const auto& g : sel.groups) {
    json premises = json::array();
    for (const auto& c : g.premises) premises.push_back(c.premise);
    groups.push_back({{"hypothesis", g.hypothesis}, {"popularity", g.popularity}, {"premises", premises}});
  }
  fs::create_directories(out);
  write_file(out / "candidates.tsv", candidates_tsv(all));
  write_file(out / "groups.json", groups.dump(2) + "\n");
  Manifest man("entail-mine", cfg);
  man.input("matrix", matrix_path);
  man.input("lexicon", lex_path);
  man.input("annotations", ann_path);
  man.output(out, "candidates.tsv");
  man.output(out, "groups.json");
  man.write(out);
  return {{"mined", mined.size()},
          {"after_exclusion", kept.size()},
          {"selected", sel.selected.size()},
          {"validation", sp.validation.size()},
          {"test", sp.test.size()}};
}

json cmd_synth(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const fs::path out = out_dir(opts, "synth");
  json sec = section(cfg, "synth");
  if (!sec.contains("seed") || opts.contains("seed")) sec["seed"] = cfg.seed;
  const SynthSpec spec = SynthSpec::from_json(sec);
  const SynthData data = generate(spec);
  fs::create_directories(out);
  data.write(out);
  Manifest man("synth", cfg);
  for (const char* f : {"cooccur.tsv", "eval_validation.tsv", "eval_test.tsv", "entail.tsv",
                        "embeddings.txt", "truth.json"})
    man.output(out, f);
  man.write(out);
  return {{"rows", data.matrix.row_count()},
          {"columns", data.matrix.col_count()},
          {"positives", data.matrix.positives().size()},
          {"entailment_candidates", data.entailment.size()}};
}

json cmd_project(const json& opts) {
  const RunConfig cfg = config_from_options(opts);
  const auto ckpt = need_string(opts, "checkpoint", "project");
  const auto matrix_path = need_string(opts, "matrix", "project");
  const fs::path out = out_dir(opts, "project");
  const json sec = section(cfg, "project");

  const FacetModel model = load_checkpoint(ckpt);
  const CooccurrenceMatrix m = CooccurrenceMatrix::load(matrix_path);
  if (m.col_count() != model.entity_ids().size())
    fail(ErrorKind::Shape, "matrix columns do not match the checkpoint's entity table");
  std::vector<std::size_t> rows;
  if (sec.contains("rows")) {
    for (const auto& t : sec["rows"]) {
      const std::string text = t.get<std::string>();
      auto r = m.find_row(RowKind::Pattern, text);
      if (!r) r = m.find_row(RowKind::KBRelation, text);
      if (!r) fail(ErrorKind::Config, "project: row '" + text + "' is not in the matrix");
      rows.push_back(*r);
    }
  } else {
    rows = m.rows_of_kind(RowKind::KBRelation);
    const auto pats = m.rows_of_kind(RowKind::Pattern);
    for (std::size_t n = 0; n < pats.size() && n < 20; ++n) rows.push_back(pats[n]);
  }
  std::vector<MdsInput> inputs;
  for (std::size_t r : rows) {
    const FacetSet fs_ = model.infer(m.row(r).tokens, m.row(r).kind);
    const nn::Mat unit = fs_.normalized();
    const bool rel = m.row(r).kind == RowKind::KBRelation;
    for (std::size_t k = 0; k < unit.rows; ++k)
      inputs.push_back({m.row(r).text + "#" + std::to_string(k), rel ? "relation_facet" : "facet",
                        {unit.row(k).begin(), unit.row(k).end()}, 0});
  }
  const nn::Mat& ents = model.entity_table().value();
  for (std::size_t j = 0; j < ents.rows; ++j) {
    std::vector<double> v(ents.row(j).begin(), ents.row(j).end());
    const double nrm = nn::norm(v);
    for (double& x : v) x /= nrm;
    inputs.push_back({m.cols().names[j], "entity", std::move(v), m.col_degree(j)});
  }
  MdsOptions mo;
  mo.min_degree = sec.value("min_degree", mo.min_degree);
  if (sec.contains("far_threshold")) mo.far_threshold = sec["far_threshold"].get<double>();
  mo.jitter_eps = sec.value("jitter_eps", mo.jitter_eps);
  mo.seed = derive_seed(cfg.seed, 0x6d6473);
  const auto points = project_mds(inputs, mo);
  fs::create_directories(out);
  write_file(out / "mds.csv", mds_csv(points));
  Manifest man("project", cfg);
  man.input("checkpoint", ckpt);
  man.input("matrix", matrix_path);
  man.output(out, "mds.csv");
  man.write(out);
  return {{"points", points.size()}};
}

json cmd_hpo(const json& opts) {
  const RunConfig base = config_from_options(opts);
  const auto matrix_path = need_string(opts, "matrix", "hpo");
  const auto emb_path = opt_string(opts, "embeddings");
  const auto val_path = need_string(opts, "eval_validation", "hpo");
  const fs::path out = out_dir(opts, "hpo");
  const json sec = section(base, "hpo");
  const auto axes = sec.contains("axes") ? axes_from_json(sec["axes"]) : default_search_axes();
  const std::size_t sweeps = sec.value("sweeps", std::size_t{1});

  const CooccurrenceMatrix m = CooccurrenceMatrix::load(matrix_path);
  const REEvalSet val = REEvalSet::load(val_path);
  const Vocabulary vocab = Vocabulary::from_matrix(m);
  const SplitAssignment split =
      split_validation(m, base.validation_fraction, derive_seed(base.seed, 0x73706c));
  const std::size_t threads = threads_of(opts);

  auto eval_fn = [&](const RunConfig& c) {
    const nn::Mat words =
        word_vectors_for(vocab, emb_path, c.model.d_word, derive_seed(c.seed, 0x656d62));
    const TrainResult r = train(m, split, vocab, words, c);
    return evaluate_re_pipeline(r.model, val, val, threads).validation.f1;
  };
  const HpoResult res = coordinate_descent_hpo(base, axes, eval_fn, sweeps);
  std::string trace;
  for (const auto& e : res.trace)
    trace += json({{"axis", e.axis}, {"value", e.value}, {"score", e.score}, {"cached", e.cached}}).dump() + "\n";
  fs::create_directories(out);
  write_file(out / "hpo_trace.jsonl", trace);
  write_file(out / "best_config.json", res.best.to_json().dump(2) + "\n");
  Manifest man("hpo", base);
  man.input("matrix", matrix_path);
  man.input("embeddings", emb_path);
  man.input("eval_validation", val_path);
  man.output(out, "hpo_trace.jsonl");
  man.output(out, "best_config.json");
  man.write(out);
  return {{"best_score", res.best_score}, {"best_config", res.best.to_json()}};
}

CooccurrenceMatrix gradcheck_corpus() {
  return CooccurrenceMatrix::from_records({
      {RowKind::Pattern, "$ARG1 was born in $ARG2", "e1"},
      {RowKind::Pattern, "$ARG1 was born in $ARG2", "e2"},
      {RowKind::Pattern, "$ARG1 lives in $ARG2", "e2"},
      {RowKind::Pattern, "$ARG1 lives in $ARG2", "e3"},
      {RowKind::Pattern, "$ARG1 works for $ARG2", "e4"},
      {RowKind::Pattern, "$ARG1 works for $ARG2", "e1"},
  });
}

json cmd_gradcheck(const json& opts) {
  RunConfig cfg = config_from_options(opts);
  const auto matrix_path = opt_string(opts, "matrix");
  const fs::path out = out_dir(opts, "gradcheck");
  const json sec = section(cfg, "gradcheck");
  const double threshold = sec.value("threshold", 1e-5);

  const CooccurrenceMatrix m = matrix_path ? CooccurrenceMatrix::load(*matrix_path) : gradcheck_corpus();
  const Vocabulary vocab = Vocabulary::from_matrix(m);
  const ModelConfig mc = cfg.effective_model();
  const nn::Mat words = word_vectors_for(vocab, std::nullopt, mc.d_word, derive_seed(cfg.seed, 1));
  FacetModel model(mc, vocab, m.cols().names, &words);
  std::vector<std::vector<std::string>> pats;
  for (const auto& r : m.rows()) pats.push_back(r.tokens);
  const nn::Mat sif = sif_table(m, words, vocab, WordStats::fit(pats, cfg.nu));
  std::vector<std::size_t> rows(m.row_count());
  std::iota(rows.begin(), rows.end(), 0);
  const auto plans = plan_epoch(m, rows, rows.size(), cfg.negatives_per_positive,
                                derive_seed(cfg.seed, 2), false);
  const RegConfig reg = cfg.reg();
  auto loss_fn = [&] {
    std::mt19937_64 rng(0);
    return batch_loss(model, m, plans.at(0), sif, reg, false, rng).total;
  };
  nn::GradCheckOptions go;
  go.seed = derive_seed(cfg.seed, 3);
  go.epsilon = sec.value("epsilon", 1e-3);
  go.stencil_order = sec.value("stencil_order", 4);
  go.max_coords_per_param = sec.value("coords_per_param", go.max_coords_per_param);
  const auto rep = nn::gradient_check(loss_fn, model.params().all(), go);
  const json result = {{"max_rel_error", rep.max_rel_error},
                       {"coordinates", rep.coordinates},
                       {"worst_param", rep.worst_param},
                       {"worst_index", rep.worst_index},
                       {"worst_analytic", rep.worst_analytic},
                       {"worst_numeric", rep.worst_numeric},
                       {"threshold", threshold},
                       {"passed", rep.max_rel_error < threshold}};
  fs::create_directories(out);
  write_file(out / "gradcheck.json", result.dump(2) + "\n");
  Manifest man("gradcheck", cfg);
  man.input("matrix", matrix_path);
  man.output(out, "gradcheck.json");
  man.write(out);
  if (!(rep.max_rel_error < threshold))
    fail(ErrorKind::Numeric, "gradient check failed: max relative error " +
                                 std::to_string(rep.max_rel_error) + " in " + rep.worst_param);
  return result;
}

}  // namespace

RunConfig config_from_options(const json& opts) {
  json j;
  if (auto text = opt_string(opts, "config_json")) {
    try {
      j = json::parse(*text);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
  } else if (auto path = opt_string(opts, "config")) {
    try {
      j = json::parse(read_file(*path));
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
  } else {
    fail(ErrorKind::Config, "a run config is required (--config)");
  }
  if (!j.is_object()) fail(ErrorKind::Config, "run config must be a JSON object");
  if (opts.contains("seed") && !opts["seed"].is_null()) j["seed"] = opts["seed"];
  if (auto a = opt_string(opts, "ablation")) j["ablation"] = *a;
  if (auto e = opt_string(opts, "encoder")) j["encoder"] = *e;
  return RunConfig::from_json(j);
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"train",      "eval-re",   "eval-entail", "score",
                                                 "entail-mine", "synth",    "project",     "hpo",
                                                 "gradcheck",  "uschema-train"};
  return names;
}

json run_command(const std::string& command, const json& raw_opts) {
  json opts = raw_opts;
  const RunConfig probe = config_from_options(raw_opts);
  if (probe.extra.contains("inputs")) {
    for (const auto& [key, value] : probe.extra["inputs"].items())
      if (!opts.contains(key) || opts[key].is_null()) opts[key] = value;
  }
  if (command == "train") return cmd_train(opts);
  if (command == "eval-re") return cmd_eval_re(opts);
  if (command == "eval-entail") return cmd_eval_entail(opts);
  if (command == "score") return cmd_score(opts);
  if (command == "entail-mine") return cmd_entail_mine(opts);
  if (command == "synth") return cmd_synth(opts);
  if (command == "project") return cmd_project(opts);
  if (command == "hpo") return cmd_hpo(opts);
  if (command == "gradcheck") return cmd_gradcheck(opts);
  if (command == "uschema-train") return cmd_uschema_train(opts);
  fail(ErrorKind::Config, "unknown command '" + command + "'");
}

}  // namespace mfus
