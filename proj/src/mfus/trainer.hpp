#pragma once

// Training loop: per-epoch sample construction, Adam on the network and
// entity table, plain gradient descent on H, validation-loss epoch selection
// and a coordinate-descent hyperparameter search.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfus/corpus.hpp"
#include "mfus/embed.hpp"
#include "mfus/model.hpp"
#include "mfus/objective.hpp"
#include "mfus/uschema.hpp"

namespace mfus {

enum class Ablation { None, NoAutoencoder, K11 };

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct RunConfig {
  ModelConfig model;
  double gamma = 0.2;
  double lr_model = 1e-3;
  double lr_h = 0.1;
  // 0 picks 50 for the Transformer encoder and 30 for the BiLSTM.
  std::size_t max_epochs = 0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double nu = WordStats::kDefaultNu;
  std::size_t negatives_per_positive = 1;
  bool uschema_init = true;
  std::size_t uschema_epochs = 20;
  double uschema_lr = 0.05;
  double validation_fraction = 0.05;
  bool regularize_relations = true;
  Ablation ablation = Ablation::None;
  // Command-specific sections ("synth", "hpo", ...) carried verbatim.
  nlohmann::json extra = nlohmann::json::object();

  std::size_t epochs() const;
  // Model config with the ablation and run seed applied.
  ModelConfig effective_model() const;
  RegConfig reg() const;
  void validate() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_relational = 0.0;
  double train_regularizer = 0.0;
  double validation_loss = 0.0;
  bool has_validation = false;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;
  std::size_t parameter_count = 0;

  // One JSON record per epoch followed by a summary record.
  // Wall time varies run to run; leave it out for hashed artifacts.
  std::string to_jsonl(bool include_timing = true) const;
};

// Epoch chosen from logged losses: argmin validation loss (first on ties), or
// the last epoch without validation rows.
std::size_t select_epoch(const std::vector<EpochRecord>& epochs);

struct TrainResult {
  FacetModel model;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// `word_vectors` is vocab x d_word and seeds both the trainable word table and
// the frozen SIF targets.
TrainResult train(const CooccurrenceMatrix& m, const SplitAssignment& split,
                  const Vocabulary& vocab, const nn::Mat& word_vectors, const RunConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Plan for one epoch: batches of training rows with their positives, one set
// of negatives, weights normalized over the whole epoch, and (i, q) pairs.
std::vector<BatchPlan> plan_epoch(const CooccurrenceMatrix& m, std::span<const std::size_t> rows,
                                  std::size_t batch_size, std::size_t negatives_per_positive,
                                  std::uint64_t seed, bool shuffle);

// Per-row mean of the loss over `rows` with dropout off.
double evaluation_loss(const FacetModel& model, const CooccurrenceMatrix& m,
                       std::span<const std::size_t> rows, const nn::Mat& sif,
                       const RegConfig& reg, std::uint64_t seed);

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<nn::Tensor*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<nn::Mat> m_, v_;
};

// value -= lr * grad
void sgd_step(nn::Tensor& param, double lr);

struct HpoAxis {
  std::string name;
  std::vector<nlohmann::json> values;
};

struct HpoEvaluation {
  std::string axis;
  nlohmann::json value;
  double score = 0.0;
  bool cached = false;
};

struct HpoResult {
  RunConfig best;
  double best_score = 0.0;
  std::vector<HpoEvaluation> trace;
};

// Axes are visited in order; each keeps the value with the highest score
// (first wins on ties) before the next axis is searched.
HpoResult coordinate_descent_hpo(const RunConfig& base, const std::vector<HpoAxis>& axes,
                                 const std::function<double(const RunConfig&)>& eval_fn,
                                 std::size_t sweeps = 1);

// gamma, K, K_rel, dropout, lr_H and max_epochs over the published ranges.
std::vector<HpoAxis> default_search_axes();
std::vector<HpoAxis> axes_from_json(const nlohmann::json& j);

}  // namespace mfus
