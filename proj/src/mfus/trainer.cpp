#include "mfus/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/log.hpp"

namespace mfus {

using nn::Mat;
using nn::Tensor;

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoAutoencoder: return "no_autoencoder";
    case Ablation::K11: return "k11";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "none" || l == "full") return Ablation::None;
  if (l == "no_autoencoder") return Ablation::NoAutoencoder;
  if (l == "k11" || l == "k_equal_krel_11") return Ablation::K11;
  fail(ErrorKind::Config, "unknown ablation '" + s + "'");
}

std::size_t RunConfig::epochs() const {
  if (max_epochs != 0) return max_epochs;
  return model.encoder == EncoderKind::BiLSTM ? 30 : 50;
}

ModelConfig RunConfig::effective_model() const {
  ModelConfig c = model;
  c.seed = derive_seed(seed, 0x6d6f64);
  if (ablation == Ablation::K11) {
    c.k = 11;
    c.k_rel = 11;
  }
  return c;
}

RegConfig RunConfig::reg() const {
  RegConfig r;
  r.gamma = gamma;
  r.enabled = ablation != Ablation::NoAutoencoder;
  r.on_relations = regularize_relations;
  return r;
}

void RunConfig::validate() const {
  model.validate();
  if (!(gamma >= 0.0)) fail(ErrorKind::Config, "gamma must be non-negative");
  if (!(lr_model >= 0.0) || !(lr_h >= 0.0))
    fail(ErrorKind::Config, "learning rates must be non-negative");
  if (batch_size == 0) fail(ErrorKind::Config, "batch_size must be positive");
  if (!(nu > 0.0)) fail(ErrorKind::Config, "nu must be positive");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    fail(ErrorKind::Config, "validation_fraction must lie in (0,1)");
}

namespace {

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys = {
      "gamma",       "K",           "K_rel",          "dropout",
      "lr_model",    "lr_H",        "max_epochs",     "batch_size",
      "seed",        "encoder",     "ablation",       "d_word",
      "d_model",     "d_entity",    "enc_layers",     "dec_layers",
      "lstm_layers", "heads",       "ffn_dim",        "max_seq_len",
      "nu",          "negatives_per_positive",        "uschema_init",
      "uschema_epochs",             "uschema_lr",     "validation_fraction",
      "regularize_relations"};
  return keys;
}

const std::set<std::string>& section_keys() {
  static const std::set<std::string> keys = {"synth", "hpo", "project", "entail",
                                             "eval",  "gradcheck", "benchmark", "inputs"};
  return keys;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = model.to_json();
  j.erase("seed");
  j["gamma"] = gamma;
  j["lr_model"] = lr_model;
  j["lr_H"] = lr_h;
  j["max_epochs"] = max_epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["nu"] = nu;
  j["negatives_per_positive"] = negatives_per_positive;
  j["uschema_init"] = uschema_init;
  j["uschema_epochs"] = uschema_epochs;
  j["uschema_lr"] = uschema_lr;
  j["validation_fraction"] = validation_fraction;
  j["regularize_relations"] = regularize_relations;
  j["ablation"] = to_string(ablation);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "run config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!run_keys().count(k) && !section_keys().count(k))
      fail(ErrorKind::Config, "unknown config key '" + k + "'");
  RunConfig c;
  try {
    nlohmann::json model_part = nlohmann::json::object();
    for (const char* k : {"d_word", "d_model", "d_entity", "enc_layers", "dec_layers",
                          "lstm_layers", "heads", "ffn_dim", "K", "K_rel", "encoder", "dropout",
                          "max_seq_len"})
      if (j.contains(k)) model_part[k] = j[k];
    c.model = ModelConfig::from_json(model_part);
    c.gamma = j.value("gamma", c.gamma);
    c.lr_model = j.value("lr_model", c.lr_model);
    c.lr_h = j.value("lr_H", c.lr_h);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.nu = j.value("nu", c.nu);
    c.negatives_per_positive = j.value("negatives_per_positive", c.negatives_per_positive);
    c.uschema_init = j.value("uschema_init", c.uschema_init);
    c.uschema_epochs = j.value("uschema_epochs", c.uschema_epochs);
    c.uschema_lr = j.value("uschema_lr", c.uschema_lr);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.regularize_relations = j.value("regularize_relations", c.regularize_relations);
    c.ablation = ablation_from_string(j.value("ablation", std::string("none")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("run config: ") + e.what());
  }
  for (const auto& [k, v] : j.items())
    if (section_keys().count(k)) c.extra[k] = v;
  c.validate();
  return c;
}

RunConfig RunConfig::parse(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("run config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string TrainReport::to_jsonl(bool include_timing) const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::json j = {{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_relational", e.train_relational},
                        {"train_regularizer", e.train_regularizer}};
    if (include_timing) j["seconds"] = e.seconds;
    j["validation_loss"] = e.has_validation ? nlohmann::json(e.validation_loss) : nlohmann::json();
    out += j.dump() + "\n";
  }
  nlohmann::json summary = {{"selected_epoch", selected_epoch},
                            {"parameter_count", parameter_count}};
  out += summary.dump() + "\n";
  return out;
}

std::size_t select_epoch(const std::vector<EpochRecord>& epochs) {
  if (epochs.empty()) return 0;
  std::size_t best = epochs.back().epoch;
  double best_loss = std::numeric_limits<double>::infinity();
  for (const auto& e : epochs) {
    if (!e.has_validation) continue;
    if (e.validation_loss < best_loss) {
      best_loss = e.validation_loss;
      best = e.epoch;
    }
  }
  return best;
}

std::vector<BatchPlan> plan_epoch(const CooccurrenceMatrix& m, std::span<const std::size_t> rows,
                                  std::size_t batch_size, std::size_t negatives_per_positive,
                                  std::uint64_t seed, bool shuffle) {
  if (batch_size == 0) fail(ErrorKind::Config, "batch_size must be positive");
  std::vector<std::size_t> order(rows.begin(), rows.end());
  if (shuffle) {
    std::mt19937_64 rng(derive_seed(seed, 1));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::size_t> allowed(rows.begin(), rows.end());
  std::sort(allowed.begin(), allowed.end());

  std::vector<BatchPlan> plans;
  std::vector<LabeledCell> all;
  std::vector<std::size_t> offsets;
  std::mt19937_64 q_rng(derive_seed(seed, 2));
  for (std::size_t start = 0, b = 0; start < order.size(); start += batch_size, ++b) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    std::vector<Cell> positives;
    BatchPlan plan;
    for (std::size_t n = start; n < end; ++n) {
      const std::size_t i = order[n];
      for (std::size_t j : m.row_cols(i)) positives.push_back({i, j});
      std::size_t q = i;
      const auto self = std::lower_bound(allowed.begin(), allowed.end(), i);
      const bool in_allowed = self != allowed.end() && *self == i;
      const std::size_t choices = allowed.size() - (in_allowed ? 1 : 0);
      if (choices > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, choices - 1);
        std::size_t idx = pick(q_rng);
        if (in_allowed && idx >= static_cast<std::size_t>(self - allowed.begin())) ++idx;
        q = allowed[idx];
      }
      plan.regularizer_pairs.emplace_back(i, q);
    }
    offsets.push_back(all.size());
    for (const Cell& c : positives) all.push_back({c.row, c.col, 1});
    if (allowed.size() > 1 && negatives_per_positive > 0) {
      NegativeOptions opt;
      opt.seed = derive_seed(seed, 100 + b);
      opt.per_positive = negatives_per_positive;
      opt.allowed_rows = allowed;
      for (const LabeledCell& c : draw_negatives(m, positives, opt)) all.push_back(c);
    }
    plans.push_back(std::move(plan));
  }
  offsets.push_back(all.size());

  const SampleBatch weighted = compute_weights(m, all);
  for (std::size_t b = 0; b < plans.size(); ++b)
    plans[b].samples.assign(weighted.entries.begin() + static_cast<std::ptrdiff_t>(offsets[b]),
                            weighted.entries.begin() + static_cast<std::ptrdiff_t>(offsets[b + 1]));
  return plans;
}

double evaluation_loss(const FacetModel& model, const CooccurrenceMatrix& m,
                       std::span<const std::size_t> rows, const Mat& sif, const RegConfig& reg,
                       std::uint64_t seed) {
  if (rows.empty()) fail(ErrorKind::EmptyInput, "evaluation loss over no rows");
  nn::NoGradGuard guard;
  std::mt19937_64 rng(seed);
  const auto plans = plan_epoch(m, rows, rows.size(), 1, seed, false);
  double total = 0.0;
  for (const auto& plan : plans) total += batch_loss(model, m, plan, sif, reg, false, rng).total.item();
  return total / static_cast<double>(rows.size());
}

void Adam::step(std::vector<Tensor*>& params) {
  if (m_.empty()) {
    for (Tensor* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) fail(ErrorKind::Invariant, "Adam parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t n = 0; n < params.size(); ++n) {
    Tensor& p = *params[n];
    const Mat& g = p.grad();
    Mat& w = p.mutable_value();
    Mat& m = m_[n];
    Mat& v = v_[n];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m.data[i] = beta1_ * m.data[i] + (1.0 - beta1_) * g.data[i];
      v.data[i] = beta2_ * v.data[i] + (1.0 - beta2_) * g.data[i] * g.data[i];
      w.data[i] -= lr_ * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + eps_);
    }
  }
}

void sgd_step(Tensor& param, double lr) {
  const Mat& g = param.grad();
  Mat& w = param.mutable_value();
  for (std::size_t i = 0; i < w.size(); ++i) w.data[i] -= lr * g.data[i];
}

TrainResult train(const CooccurrenceMatrix& m, const SplitAssignment& split,
                  const Vocabulary& vocab, const Mat& word_vectors, const RunConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train_rows.empty()) fail(ErrorKind::EmptyInput, "training split is empty");
  const ModelConfig mc = cfg.effective_model();
  if (word_vectors.rows != vocab.size() || word_vectors.cols != mc.d_word)
    fail(ErrorKind::Shape, "word vectors must be vocab x d_word (" + std::to_string(vocab.size()) +
                               "x" + std::to_string(mc.d_word) + ")");

  FacetModel model(mc, vocab, m.cols().names, &word_vectors);
  if (cfg.uschema_init) {
    UschemaConfig uc;
    uc.dim = mc.d_entity;
    uc.epochs = cfg.uschema_epochs;
    uc.lr = cfg.uschema_lr;
    uc.negatives_per_positive = std::max<std::size_t>(1, cfg.negatives_per_positive);
    uc.seed = derive_seed(cfg.seed, 0x7573);
    init_entities_from_uschema(train_uschema(m, uc, split.train_rows), model);
  }

  std::vector<std::vector<std::string>> train_patterns;
  for (std::size_t i : split.train_rows)
    if (m.row(i).kind == RowKind::Pattern) train_patterns.push_back(m.row(i).tokens);
  const WordStats stats = WordStats::fit(train_patterns, cfg.nu);
  const Mat sif = sif_table(m, word_vectors, vocab, stats);
  const RegConfig reg = cfg.reg();

  std::vector<Tensor*> adam_params;
  Tensor* h_param = nullptr;
  for (auto& [name, t] : model.params().all()) {
    if (name == "H")
      h_param = &t;
    else
      adam_params.push_back(&t);
  }
  Adam adam(cfg.lr_model);

  TrainReport report;
  report.parameter_count = model.params().parameter_count();
  std::optional<ModelParams> best_params;
  double best_val = std::numeric_limits<double>::infinity();
  const bool has_val = !split.validation_rows.empty();
  if (!has_val) warn("no validation rows; the last epoch is kept");

  for (std::size_t epoch = 1; epoch <= cfg.epochs(); ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 1000 + epoch);
    const auto plans = plan_epoch(m, split.train_rows, cfg.batch_size,
                                  cfg.negatives_per_positive, epoch_seed, true);
    std::mt19937_64 dropout_rng(derive_seed(epoch_seed, 3));
    EpochRecord rec;
    rec.epoch = epoch;
    for (const auto& plan : plans) {
      model.params().zero_grad();
      LossTerms terms = batch_loss(model, m, plan, sif, reg, true, dropout_rng);
      nn::backward(terms.total);
      adam.step(adam_params);
      sgd_step(*h_param, cfg.lr_h);
      rec.train_loss += terms.total.item();
      rec.train_relational += terms.relational;
      rec.train_regularizer += terms.regularizer;
    }
    const double n_rows = static_cast<double>(split.train_rows.size());
    rec.train_loss /= n_rows;
    rec.train_relational /= n_rows;
    rec.train_regularizer /= n_rows;
    if (has_val) {
      rec.has_validation = true;
      rec.validation_loss = evaluation_loss(model, m, split.validation_rows, sif, reg,
                                            derive_seed(cfg.seed, 0x76616c));
      if (rec.validation_loss < best_val) {
        best_val = rec.validation_loss;
        best_params = model.params().clone();
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  report.selected_epoch = select_epoch(report.epochs);
  if (best_params) model.params().copy_values_from(*best_params);
  model.params().zero_grad();
  return {std::move(model), std::move(report)};
}

namespace {

RunConfig with_field(const RunConfig& base, const std::string& name, const nlohmann::json& value) {
  nlohmann::json j = base.to_json();
  if (!run_keys().count(name)) fail(ErrorKind::Config, "unknown search axis '" + name + "'");
  j[name] = value;
  return RunConfig::from_json(j);
}

}  // namespace

HpoResult coordinate_descent_hpo(const RunConfig& base, const std::vector<HpoAxis>& axes,
                                 const std::function<double(const RunConfig&)>& eval_fn,
                                 std::size_t sweeps) {
  HpoResult result;
  result.best = base;
  if (axes.empty()) return result;
  std::map<std::string, double> cache;
  auto evaluate = [&](const RunConfig& c, bool& cached) {
    const std::string key = c.to_json().dump();
    auto it = cache.find(key);
    cached = it != cache.end();
    if (cached) return it->second;
    const double s = eval_fn(c);
    if (!std::isfinite(s)) fail(ErrorKind::Numeric, "search metric is not finite");
    cache.emplace(key, s);
    return s;
  };
  bool have_score = false;
  for (std::size_t sweep = 0; sweep < std::max<std::size_t>(1, sweeps); ++sweep) {
    for (const auto& axis : axes) {
      if (axis.values.empty()) fail(ErrorKind::Config, "search axis '" + axis.name + "' is empty");
      std::optional<RunConfig> axis_best;
      double axis_score = -std::numeric_limits<double>::infinity();
      for (const auto& value : axis.values) {
        RunConfig cand = with_field(result.best, axis.name, value);
        bool cached = false;
        const double s = evaluate(cand, cached);
        result.trace.push_back({axis.name, value, s, cached});
        if (!axis_best || s > axis_score) {
          axis_best = cand;
          axis_score = s;
        }
      }
      result.best = *axis_best;
      result.best_score = axis_score;
      have_score = true;
    }
  }
  if (!have_score) result.best_score = 0.0;
  return result;
}

std::vector<HpoAxis> default_search_axes() {
  using J = nlohmann::json;
  return {
      {"gamma", {J(0.1), J(0.2), J(0.3)}},
      {"K", {J(1), J(2), J(3), J(4), J(5), J(6), J(11)}},
      {"K_rel", {J(1), J(8), J(9), J(10), J(11), J(12), J(13), J(14), J(15)}},
      {"dropout", {J(0.25), J(0.3), J(0.35)}},
      {"lr_H", {J(1.0), J(0.1), J(0.01)}},
      {"max_epochs", {J(15), J(20), J(25), J(30), J(50)}},
  };
}

std::vector<HpoAxis> axes_from_json(const nlohmann::json& j) {
  std::vector<HpoAxis> axes;
  if (j.is_null()) return axes;
  if (!j.is_array()) fail(ErrorKind::Config, "hpo.axes must be an array");
  for (const auto& a : j) {
    if (!a.is_object() || !a.contains("name") || !a.contains("values") || !a["values"].is_array())
      fail(ErrorKind::Config, "each axis needs a name and a values array");
    HpoAxis axis;
    axis.name = a["name"].get<std::string>();
    for (const auto& v : a["values"]) axis.values.push_back(v);
    axes.push_back(std::move(axis));
  }
  return axes;
}

}  // namespace mfus
