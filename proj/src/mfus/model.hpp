#pragma once

// Facet-producing network: encoder (Transformer or BiLSTM) over the pattern
// tokens plus <eos>, K slot maps from the <eos> state into a non-autoregressive
// Transformer decoder with cross-attention, then an output map into the
// entity-pair space.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mfus/corpus.hpp"
#include "mfus/embed.hpp"
#include "mfus/tensor.hpp"

namespace mfus {

enum class EncoderKind { Transformer, BiLSTM };

const char* to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& s);

struct ModelConfig {
  std::size_t d_word = 300;
  std::size_t d_model = 300;
  std::size_t d_entity = 300;
  std::size_t enc_layers = 3;
  std::size_t dec_layers = 3;
  std::size_t lstm_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 300;
  std::size_t k = 5;
  std::size_t k_rel = 11;
  EncoderKind encoder = EncoderKind::Transformer;
  double dropout = 0.3;
  std::size_t max_seq_len = 64;
  std::uint64_t seed = 0;

  std::size_t slot_maps() const { return std::max(k, k_rel); }
  std::size_t facet_count(RowKind kind) const {
    return kind == RowKind::KBRelation ? k_rel : k;
  }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Named trainable tensors in a stable order.
class ModelParams {
 public:
  nn::Tensor& add(const std::string& name, nn::Mat value);
  const nn::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::pair<std::string, nn::Tensor>>& all() const { return tensors_; }
  std::vector<std::pair<std::string, nn::Tensor>>& all() { return tensors_; }
  std::size_t parameter_count(bool include_word_table = true) const;
  void zero_grad();
  // Deep copy of every value; tensors are fresh leaves.
  ModelParams clone() const;
  void copy_values_from(const ModelParams& other);

 private:
  std::vector<std::pair<std::string, nn::Tensor>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EncoderOutput {
  nn::Tensor states;   // (|tokens| + 1) x d_model, last row is <eos>
  nn::Tensor summary;  // 1 x d_model sequence representation
};

// K x d facet matrix with helpers for the normalized view.
struct FacetSet {
  nn::Mat facets;

  std::size_t size() const { return facets.rows; }
  // Unit-length rows; throws when a row has norm below 1e-12.
  nn::Mat normalized() const;
};

class FacetModel {
 public:
  // Parameters are initialized from `word_init` (vocab x d_word) when given
  // and seeded random draws otherwise.
  FacetModel(ModelConfig config, Vocabulary vocab, std::vector<std::string> entity_ids,
             const nn::Mat* word_init = nullptr);
  FacetModel(ModelConfig config, Vocabulary vocab, std::vector<std::string> entity_ids,
             ModelParams params);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<std::string>& entity_ids() const { return entity_ids_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  const nn::Tensor& entity_table() const { return params_.get("entity_emb"); }
  const nn::Tensor& h_map() const { return params_.get("H"); }

  std::vector<std::size_t> token_ids(const std::vector<std::string>& tokens) const;

  // `<eos>` is appended here; callers pass the raw pattern tokens.
  EncoderOutput encode(const std::vector<std::string>& tokens, bool train,
                       std::mt19937_64& rng) const;
  nn::Tensor decode_facets(const EncoderOutput& enc, std::size_t k_count, bool train,
                           std::mt19937_64& rng) const;
  nn::Tensor facets(const std::vector<std::string>& tokens, RowKind kind, bool train,
                    std::mt19937_64& rng) const;
  // Dropout off, no graph recorded.
  FacetSet infer(const std::vector<std::string>& tokens, RowKind kind) const;

 private:
  void init_params(const nn::Mat* word_init);
  nn::Tensor attention(const std::string& prefix, const nn::Tensor& query_in,
                       const nn::Tensor& kv_in) const;
  nn::Tensor feed_forward(const std::string& prefix, const nn::Tensor& x) const;
  nn::Tensor linear(const std::string& prefix, const nn::Tensor& x) const;
  nn::Tensor norm(const std::string& prefix, const nn::Tensor& x) const;
  EncoderOutput encode_transformer(const nn::Tensor& x, bool train,
                                   std::mt19937_64& rng) const;
  EncoderOutput encode_bilstm(const nn::Tensor& x, bool train, std::mt19937_64& rng) const;

  ModelConfig config_;
  Vocabulary vocab_;
  std::vector<std::string> entity_ids_;
  ModelParams params_;
};

// Sinusoidal position table, len x dim.
nn::Mat sinusoidal_positions(std::size_t len, std::size_t dim);

// Tensor container shared by the facet model and the factorization baseline:
// magic "MFUS", u32 version, u32 tensor count, per tensor (u32 name length,
// UTF-8 name, u8 dtype tag, u32 rank, u64 dims, little-endian payload), then
// u64 length and a JSON metadata blob.
struct NamedMat {
  std::string name;
  nn::Mat value;
};

inline constexpr std::uint32_t kContainerVersion = 1;

std::string encode_container(const std::vector<NamedMat>& tensors, const nlohmann::json& meta);
std::pair<std::vector<NamedMat>, nlohmann::json> decode_container(const std::string& bytes);

void save_checkpoint(const FacetModel& model, const std::filesystem::path& path);
FacetModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const FacetModel& model);
FacetModel checkpoint_from_bytes(const std::string& bytes);

}  // namespace mfus
