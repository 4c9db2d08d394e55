#include "mfus/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mfus/error.hpp"
#include "mfus/io.hpp"

namespace mfus {

using nn::Mat;
using nn::Tensor;

const char* to_string(EncoderKind kind) {
  return kind == EncoderKind::Transformer ? "transformer" : "bilstm";
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  const std::string l = to_lower(s);
  if (l == "transformer" || l == "trans") return EncoderKind::Transformer;
  if (l == "bilstm" || l == "lstm") return EncoderKind::BiLSTM;
  fail(ErrorKind::Config, "unknown encoder kind '" + s + "'");
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, msg);
  };
  need(d_word > 0 && d_model > 0 && d_entity > 0, "model dimensions must be positive");
  need(heads > 0 && d_model % heads == 0, "d_model must be divisible by heads");
  need(k >= 1, "K must be at least 1");
  need(k_rel >= 1, "K_rel must be at least 1");
  need(ffn_dim > 0, "ffn_dim must be positive");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0,1)");
  need(max_seq_len >= 2, "max_seq_len must be at least 2");
  if (encoder == EncoderKind::Transformer) {
    need(enc_layers >= 1, "Transformer encoder needs at least one layer");
  } else {
    need(lstm_layers >= 1, "BiLSTM encoder needs at least one layer");
    need(d_model % 2 == 0, "BiLSTM needs an even d_model");
  }
  need(dec_layers >= 1, "decoder needs at least one layer");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d_word", d_word},           {"d_model", d_model},
          {"d_entity", d_entity},       {"enc_layers", enc_layers},
          {"dec_layers", dec_layers},   {"lstm_layers", lstm_layers},
          {"heads", heads},             {"ffn_dim", ffn_dim},
          {"K", k},                     {"K_rel", k_rel},
          {"encoder", to_string(encoder)}, {"dropout", dropout},
          {"max_seq_len", max_seq_len}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.d_word = j.value("d_word", c.d_word);
    c.d_model = j.value("d_model", c.d_model);
    c.d_entity = j.value("d_entity", c.d_entity);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.k = j.value("K", c.k);
    c.k_rel = j.value("K_rel", c.k_rel);
    c.encoder = encoder_kind_from_string(j.value("encoder", std::string("transformer")));
    c.dropout = j.value("dropout", c.dropout);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor& ModelParams::add(const std::string& name, Mat value) {
  if (index_.count(name)) fail(ErrorKind::Invariant, "duplicate parameter " + name);
  index_[name] = tensors_.size();
  tensors_.emplace_back(name, Tensor::leaf(std::move(value), true));
  return tensors_.back().second;
}

const Tensor& ModelParams::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::Invariant, "missing parameter " + name);
  return tensors_[it->second].second;
}

std::size_t ModelParams::parameter_count(bool include_word_table) const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_)
    if (include_word_table || name != "word_emb") n += t.value().size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors_) t.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& [name, t] : tensors_) out.add(name, t.value());
  return out;
}

void ModelParams::copy_values_from(const ModelParams& other) {
  for (auto& [name, t] : tensors_) {
    const Mat& src = other.get(name).value();
    if (!src.same_shape(t.value())) fail(ErrorKind::Shape, "parameter shape mismatch: " + name);
    t.mutable_value().data = src.data;
  }
}

Mat FacetSet::normalized() const {
  Mat out = facets;
  for (std::size_t r = 0; r < out.rows; ++r) {
    const double n = nn::norm(out.row(r));
    if (n < 1e-12)
      fail(ErrorKind::Numeric, "facet " + std::to_string(r) + " has zero norm");
    for (double& v : out.row(r)) v /= n;
  }
  return out;
}

nn::Mat sinusoidal_positions(std::size_t len, std::size_t dim) {
  Mat pe(len, dim);
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, expo);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

namespace {

Mat xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> unif(-bound, bound);
  Mat m(in, out);
  for (double& v : m.data) v = unif(rng);
  return m;
}

void add_linear(ModelParams& p, const std::string& prefix, std::size_t in, std::size_t out,
                std::mt19937_64& rng) {
  p.add(prefix + ".w", xavier(in, out, rng));
  p.add(prefix + ".b", Mat(1, out));
}

void add_norm(ModelParams& p, const std::string& prefix, std::size_t dim) {
  p.add(prefix + ".g", Mat(1, dim, 1.0));
  p.add(prefix + ".b", Mat(1, dim));
}

void add_attention(ModelParams& p, const std::string& prefix, std::size_t d,
                   std::mt19937_64& rng) {
  for (const char* part : {".q", ".k", ".v", ".o"}) add_linear(p, prefix + part, d, d, rng);
}

}  // namespace

FacetModel::FacetModel(ModelConfig config, Vocabulary vocab,
                       std::vector<std::string> entity_ids, const nn::Mat* word_init)
    : config_(std::move(config)), vocab_(std::move(vocab)), entity_ids_(std::move(entity_ids)) {
  config_.validate();
  init_params(word_init);
}

FacetModel::FacetModel(ModelConfig config, Vocabulary vocab,
                       std::vector<std::string> entity_ids, ModelParams params)
    : FacetModel(std::move(config), std::move(vocab), std::move(entity_ids), nullptr) {
  for (const auto& [name, t] : params.all()) {
    if (!params_.contains(name)) fail(ErrorKind::Format, "unexpected parameter " + name);
  }
  for (const auto& [name, t] : params_.all()) {
    if (!params.contains(name)) fail(ErrorKind::Format, "missing parameter " + name);
  }
  params_.copy_values_from(params);
}

void FacetModel::init_params(const nn::Mat* word_init) {
  const auto& c = config_;
  std::mt19937_64 rng(c.seed);
  if (entity_ids_.empty()) fail(ErrorKind::EmptyInput, "model needs at least one entity pair");

  if (word_init) {
    if (word_init->rows != vocab_.size() || word_init->cols != c.d_word)
      fail(ErrorKind::Shape, "word table init must be vocab x d_word");
    params_.add("word_emb", *word_init);
  } else {
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.d_word));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Mat w(vocab_.size(), c.d_word);
    for (double& v : w.data) v = unif(rng);
    params_.add("word_emb", std::move(w));
  }
  if (c.d_word != c.d_model) add_linear(params_, "input", c.d_word, c.d_model, rng);

  if (c.encoder == EncoderKind::Transformer) {
    for (std::size_t l = 0; l < c.enc_layers; ++l) {
      const std::string p = "te." + std::to_string(l);
      add_norm(params_, p + ".ln1", c.d_model);
      add_attention(params_, p + ".attn", c.d_model, rng);
      add_norm(params_, p + ".ln2", c.d_model);
      add_linear(params_, p + ".ffn.1", c.d_model, c.ffn_dim, rng);
      add_linear(params_, p + ".ffn.2", c.ffn_dim, c.d_model, rng);
    }
    add_norm(params_, "te.ln_f", c.d_model);
  } else {
    const std::size_t h = c.d_model / 2;
    for (std::size_t l = 0; l < c.lstm_layers; ++l) {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string p = "lstm." + std::to_string(l) + "." + dir;
        params_.add(p + ".wx", xavier(c.d_model, 4 * h, rng));
        params_.add(p + ".wh", xavier(h, 4 * h, rng));
        Mat b(1, 4 * h);
        for (std::size_t i = h; i < 2 * h; ++i) b.data[i] = 1.0;  // forget gate
        params_.add(p + ".b", std::move(b));
      }
    }
    add_linear(params_, "lstm.summary", c.d_model, c.d_model, rng);
  }

  for (std::size_t k = 0; k < c.slot_maps(); ++k)
    add_linear(params_, "ld." + std::to_string(k), c.d_model, c.d_model, rng);

  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const std::string p = "td." + std::to_string(l);
    add_norm(params_, p + ".ln1", c.d_model);
    add_attention(params_, p + ".self", c.d_model, rng);
    add_norm(params_, p + ".ln2", c.d_model);
    add_attention(params_, p + ".cross", c.d_model, rng);
    add_norm(params_, p + ".ln3", c.d_model);
    add_linear(params_, p + ".ffn.1", c.d_model, c.ffn_dim, rng);
    add_linear(params_, p + ".ffn.2", c.ffn_dim, c.d_model, rng);
  }
  add_norm(params_, "td.ln_f", c.d_model);
  add_linear(params_, "lo", c.d_model, c.d_entity, rng);

  {
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(c.d_entity)));
    Mat e(entity_ids_.size(), c.d_entity);
    for (std::size_t r = 0; r < e.rows; ++r) {
      do {
        for (double& v : e.row(r)) v = gauss(rng);
      } while (nn::norm(e.row(r)) < 1e-6);
    }
    params_.add("entity_emb", std::move(e));
  }
  params_.add("H", xavier(c.d_entity, c.d_word, rng));
}

Tensor FacetModel::linear(const std::string& prefix, const Tensor& x) const {
  return nn::add_bias(nn::matmul(x, params_.get(prefix + ".w")), params_.get(prefix + ".b"));
}

Tensor FacetModel::norm(const std::string& prefix, const Tensor& x) const {
  return nn::layer_norm(x, params_.get(prefix + ".g"), params_.get(prefix + ".b"));
}

Tensor FacetModel::attention(const std::string& prefix, const Tensor& query_in,
                             const Tensor& kv_in) const {
  const Tensor q = linear(prefix + ".q", query_in);
  const Tensor k = linear(prefix + ".k", kv_in);
  const Tensor v = linear(prefix + ".v", kv_in);
  const std::size_t heads = config_.heads;
  const std::size_t dh = config_.d_model / heads;
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(nn::scaled_dot_attention(nn::slice_cols(q, h * dh, dh),
                                            nn::slice_cols(k, h * dh, dh),
                                            nn::slice_cols(v, h * dh, dh)));
  }
  return linear(prefix + ".o", heads == 1 ? outs[0] : nn::concat_cols(outs));
}

Tensor FacetModel::feed_forward(const std::string& prefix, const Tensor& x) const {
  return linear(prefix + ".ffn.2", nn::gelu(linear(prefix + ".ffn.1", x)));
}

std::vector<std::size_t> FacetModel::token_ids(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(vocab_.index(t));
  return ids;
}

EncoderOutput FacetModel::encode(const std::vector<std::string>& tokens, bool train,
                                 std::mt19937_64& rng) const {
  if (tokens.empty()) fail(ErrorKind::EmptyInput, "cannot encode an empty pattern");
  if (tokens.size() + 1 > config_.max_seq_len)
    fail(ErrorKind::Config, "pattern of " + std::to_string(tokens.size()) +
                                " tokens exceeds max_seq_len " +
                                std::to_string(config_.max_seq_len));
  std::vector<std::size_t> ids = token_ids(tokens);
  ids.push_back(vocab_.index(Vocabulary::kEos));
  Tensor x = nn::gather_rows(params_.get("word_emb"), ids);
  if (config_.d_word != config_.d_model) x = linear("input", x);
  if (config_.encoder == EncoderKind::Transformer) return encode_transformer(x, train, rng);
  return encode_bilstm(x, train, rng);
}

EncoderOutput FacetModel::encode_transformer(const Tensor& input, bool train,
                                             std::mt19937_64& rng) const {
  const double p = config_.dropout;
  Tensor x = nn::add(input, Tensor::constant(sinusoidal_positions(input.rows(), config_.d_model)));
  x = nn::dropout(x, p, train, rng);
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    const std::string pre = "te." + std::to_string(l);
    const Tensor h1 = norm(pre + ".ln1", x);
    x = nn::add(x, nn::dropout(attention(pre + ".attn", h1, h1), p, train, rng));
    const Tensor h2 = norm(pre + ".ln2", x);
    x = nn::add(x, nn::dropout(feed_forward(pre, h2), p, train, rng));
  }
  EncoderOutput out;
  out.states = norm("te.ln_f", x);
  out.summary = nn::slice_rows(out.states, out.states.rows() - 1, 1);
  return out;
}

EncoderOutput FacetModel::encode_bilstm(const Tensor& input, bool train,
                                        std::mt19937_64& rng) const {
  const double p = config_.dropout;
  const std::size_t h = config_.d_model / 2;
  const std::size_t len = input.rows();
  Tensor x = nn::dropout(input, p, train, rng);
  Tensor last_fwd, first_bwd;
  for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
    std::vector<Tensor> fwd(len), bwd(len);
    for (int dir = 0; dir < 2; ++dir) {
      const std::string pre = "lstm." + std::to_string(l) + (dir == 0 ? ".fwd" : ".bwd");
      const Tensor gates_x = nn::add_bias(nn::matmul(x, params_.get(pre + ".wx")),
                                          params_.get(pre + ".b"));
      const Tensor& wh = params_.get(pre + ".wh");
      Tensor hs = Tensor::constant(Mat(1, h));
      Tensor cs = Tensor::constant(Mat(1, h));
      for (std::size_t step = 0; step < len; ++step) {
        const std::size_t t = dir == 0 ? step : len - 1 - step;
        const Tensor gates = nn::add(nn::slice_rows(gates_x, t, 1), nn::matmul(hs, wh));
        const Tensor i_g = nn::sigmoid(nn::slice_cols(gates, 0, h));
        const Tensor f_g = nn::sigmoid(nn::slice_cols(gates, h, h));
        const Tensor g_g = nn::tanh(nn::slice_cols(gates, 2 * h, h));
        const Tensor o_g = nn::sigmoid(nn::slice_cols(gates, 3 * h, h));
        cs = nn::add(nn::mul(f_g, cs), nn::mul(i_g, g_g));
        hs = nn::mul(o_g, nn::tanh(cs));
        (dir == 0 ? fwd : bwd)[t] = hs;
      }
    }
    std::vector<Tensor> rows(len);
    for (std::size_t t = 0; t < len; ++t) rows[t] = nn::concat_cols({fwd[t], bwd[t]});
    x = nn::concat_rows(rows);
    last_fwd = fwd[len - 1];
    first_bwd = bwd[0];
    if (l + 1 < config_.lstm_layers) x = nn::dropout(x, p, train, rng);
  }
  EncoderOutput out;
  out.states = x;
  out.summary = linear("lstm.summary", nn::concat_cols({last_fwd, first_bwd}));
  return out;
}

Tensor FacetModel::decode_facets(const EncoderOutput& enc, std::size_t k_count, bool train,
                                 std::mt19937_64& rng) const {
  if (k_count == 0) fail(ErrorKind::Config, "facet count must be positive");
  if (k_count > config_.slot_maps())
    fail(ErrorKind::Config, "facet count " + std::to_string(k_count) + " exceeds the " +
                                std::to_string(config_.slot_maps()) + " slot maps");
  const double p = config_.dropout;
  std::vector<Tensor> slots;
  slots.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    slots.push_back(linear("ld." + std::to_string(k), enc.summary));
  Tensor x = k_count == 1 ? slots[0] : nn::concat_rows(slots);
  for (std::size_t l = 0; l < config_.dec_layers; ++l) {
    const std::string pre = "td." + std::to_string(l);
    const Tensor h1 = norm(pre + ".ln1", x);
    x = nn::add(x, nn::dropout(attention(pre + ".self", h1, h1), p, train, rng));
    const Tensor h2 = norm(pre + ".ln2", x);
    x = nn::add(x, nn::dropout(attention(pre + ".cross", h2, enc.states), p, train, rng));
    const Tensor h3 = norm(pre + ".ln3", x);
    x = nn::add(x, nn::dropout(feed_forward(pre, h3), p, train, rng));
  }
  return linear("lo", norm("td.ln_f", x));
}

Tensor FacetModel::facets(const std::vector<std::string>& tokens, RowKind kind, bool train,
                          std::mt19937_64& rng) const {
  const EncoderOutput enc = encode(tokens, train, rng);
  return decode_facets(enc, config_.facet_count(kind), train, rng);
}

FacetSet FacetModel::infer(const std::vector<std::string>& tokens, RowKind kind) const {
  nn::NoGradGuard guard;
  std::mt19937_64 unused(0);
  return FacetSet{facets(tokens, kind, false, unused).value()};
}

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::Format, "truncated container");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t kDtypeF64 = 1;

}  // namespace

std::string encode_container(const std::vector<NamedMat>& tensors, const nlohmann::json& meta) {
  std::string out = "MFUS";
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_le<std::uint8_t>(out, kDtypeF64);
    put_le<std::uint32_t>(out, 2);
    put_le<std::uint64_t>(out, t.value.rows);
    put_le<std::uint64_t>(out, t.value.cols);
    for (double v : t.value.data) put_le<double>(out, v);
  }
  const std::string blob = meta.dump();
  put_le<std::uint64_t>(out, blob.size());
  out += blob;
  return out;
}

std::pair<std::vector<NamedMat>, nlohmann::json> decode_container(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < 4 || bytes.compare(0, 4, "MFUS") != 0)
    fail(ErrorKind::Format, "bad magic: not an MFUS container");
  in.take(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kContainerVersion)
    fail(ErrorKind::Format, "unsupported container version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  std::vector<NamedMat> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedMat t;
    t.name = in.take(in.get<std::uint32_t>());
    const auto dtype = in.get<std::uint8_t>();
    if (dtype != kDtypeF64) fail(ErrorKind::Format, "unsupported dtype tag in " + t.name);
    const auto rank = in.get<std::uint32_t>();
    if (rank != 2) fail(ErrorKind::Format, "unsupported rank in " + t.name);
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (cols != 0 && rows > (bytes.size() / 8) / cols)
      fail(ErrorKind::Format, "truncated container");
    t.value = Mat(rows, cols);
    for (double& v : t.value.data) v = in.get<double>();
    tensors.push_back(std::move(t));
  }
  const std::string blob = in.take(in.get<std::uint64_t>());
  if (!in.at_end()) fail(ErrorKind::Format, "trailing bytes after container metadata");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("container metadata: ") + e.what());
  }
  return {std::move(tensors), std::move(meta)};
}

std::string checkpoint_bytes(const FacetModel& model) {
  std::vector<NamedMat> tensors;
  for (const auto& [name, t] : model.params().all()) tensors.push_back({name, t.value()});
  nlohmann::json meta = model.config().to_json();
  meta["kind"] = "facet_model";
  meta["vocab"] = model.vocab().tokens();
  meta["entity_ids"] = model.entity_ids();
  return encode_container(tensors, meta);
}

FacetModel checkpoint_from_bytes(const std::string& bytes) {
  auto [tensors, meta] = decode_container(bytes);
  if (meta.value("kind", std::string()) != "facet_model")
    fail(ErrorKind::Format, "container does not hold a facet model");
  ModelConfig config = ModelConfig::from_json(meta);
  Vocabulary vocab;
  for (const auto& tok : meta.at("vocab")) vocab.add(tok.get<std::string>());
  auto entities = meta.at("entity_ids").get<std::vector<std::string>>();
  ModelParams params;
  for (auto& t : tensors) params.add(t.name, std::move(t.value));
  return FacetModel(std::move(config), std::move(vocab), std::move(entities), std::move(params));
}

void save_checkpoint(const FacetModel& model, const std::filesystem::path& path) {
  write_file(path, checkpoint_bytes(model));
}

FacetModel load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_file(path));
}

}  // namespace mfus
