#include "mfus/uschema.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/model.hpp"

namespace mfus {

using nn::Mat;

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// One SGD step on -log sigmoid(sign * p.e) + l2 (|p|^2 + |e|^2) / 2.
void logistic_step(std::span<double> p, std::span<double> e, double sign, double lr, double l2) {
  const double g = -sign * (1.0 - sigmoid(sign * nn::dot(p, e)));
  for (std::size_t c = 0; c < p.size(); ++c) {
    const double pc = p[c];
    const double ec = e[c];
    p[c] -= lr * (g * ec + l2 * pc);
    e[c] -= lr * (g * pc + l2 * ec);
  }
}

}  // namespace

double FactorModel::score(std::size_t row, std::size_t col) const {
  return nn::dot(rows.row(row), entities.row(col));
}

double FactorModel::row_cosine(std::size_t a, std::size_t b) const {
  const double na = nn::norm(rows.row(a));
  const double nb = nn::norm(rows.row(b));
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return nn::dot(rows.row(a), rows.row(b)) / (na * nb);
}

FactorModel train_uschema(const CooccurrenceMatrix& m, const UschemaConfig& config,
                          std::span<const std::size_t> rows) {
  if (config.dim == 0) fail(ErrorKind::Config, "USchema dimension must be positive");
  if (m.positives().empty()) fail(ErrorKind::EmptyInput, "USchema needs at least one positive");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> gauss(0.0, 0.1);
  FactorModel fm{Mat(m.row_count(), config.dim), Mat(m.col_count(), config.dim)};
  for (double& v : fm.rows.data) v = gauss(rng);
  for (double& v : fm.entities.data) v = gauss(rng);

  std::vector<Cell> order;
  if (rows.empty()) {
    order = m.positives();
  } else {
    for (std::size_t i : rows)
      for (std::size_t j : m.row_cols(i)) order.push_back({i, j});
  }
  if (order.empty()) fail(ErrorKind::EmptyInput, "USchema rows have no positives");
  std::uniform_int_distribution<std::size_t> pick_col(0, m.col_count() - 1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const Cell& c : order) {
      logistic_step(fm.rows.row(c.row), fm.entities.row(c.col), 1.0, config.lr, config.l2);
      if (m.pattern_freq(c.row) == m.col_count()) continue;
      for (std::size_t n = 0; n < config.negatives_per_positive; ++n) {
        std::size_t j = pick_col(rng);
        while (m.contains(c.row, j)) j = pick_col(rng);
        logistic_step(fm.rows.row(c.row), fm.entities.row(j), -1.0, config.lr, config.l2);
      }
    }
  }
  return fm;
}

void init_entities_from_uschema(const FactorModel& fm, FacetModel& model) {
  nn::Tensor handle = model.entity_table();
  Mat& table = handle.mutable_value();
  if (!fm.entities.same_shape(table))
    fail(ErrorKind::Shape, "USchema entity table is " + std::to_string(fm.entities.rows) + "x" +
                               std::to_string(fm.entities.cols) + " but the model expects " +
                               std::to_string(table.rows) + "x" + std::to_string(table.cols));
  for (std::size_t r = 0; r < table.rows; ++r)
    if (nn::norm(fm.entities.row(r)) < 1e-12)
      fail(ErrorKind::Numeric, "USchema entity row " + std::to_string(r) + " has zero norm");
  table.data = fm.entities.data;
}

std::string uschema_bytes(const FactorModel& fm) {
  nlohmann::json meta = {{"kind", "uschema"}, {"dim", fm.dim()}};
  return encode_container({{"uschema/rows", fm.rows}, {"uschema/entities", fm.entities}}, meta);
}

FactorModel uschema_from_bytes(const std::string& bytes) {
  auto [tensors, meta] = decode_container(bytes);
  if (meta.value("kind", std::string()) != "uschema")
    fail(ErrorKind::Format, "container does not hold a USchema model");
  FactorModel fm;
  bool have_rows = false, have_ents = false;
  for (auto& t : tensors) {
    if (t.name == "uschema/rows") {
      fm.rows = std::move(t.value);
      have_rows = true;
    } else if (t.name == "uschema/entities") {
      fm.entities = std::move(t.value);
      have_ents = true;
    }
  }
  if (!have_rows || !have_ents || fm.rows.cols != fm.entities.cols)
    fail(ErrorKind::Format, "USchema container is missing tensors");
  return fm;
}

void save_uschema(const FactorModel& fm, const std::filesystem::path& path) {
  write_file(path, uschema_bytes(fm));
}

FactorModel load_uschema(const std::filesystem::path& path) {
  return uschema_from_bytes(read_file(path));
}

}  // namespace mfus
