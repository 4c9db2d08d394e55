#pragma once

// Lookup-table factorization baseline: one free vector per row and per entity
// pair, trained with a logistic loss against sampled negative columns.

#include <cstdint>
#include <filesystem>
#include <string>

#include "mfus/corpus.hpp"
#include "mfus/tensor.hpp"

namespace mfus {

class FacetModel;

struct UschemaConfig {
  std::size_t dim = 300;
  std::size_t epochs = 20;
  double lr = 0.05;
  std::size_t negatives_per_positive = 1;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct FactorModel {
  nn::Mat rows;      // I x d
  nn::Mat entities;  // J x d

  std::size_t dim() const { return rows.cols; }
  double score(std::size_t row, std::size_t col) const;
  // Cosine of two row vectors; 0 when either has zero norm.
  double row_cosine(std::size_t a, std::size_t b) const;
};

// Only positives of `rows` are fitted; empty means every row.
FactorModel train_uschema(const CooccurrenceMatrix& m, const UschemaConfig& config,
                          std::span<const std::size_t> rows = {});

// Copies the factorization's entity vectors into the model's entity table.
void init_entities_from_uschema(const FactorModel& fm, FacetModel& model);

inline double ensemble_max(double a, double b) { return a < b ? b : a; }

std::string uschema_bytes(const FactorModel& fm);
FactorModel uschema_from_bytes(const std::string& bytes);
void save_uschema(const FactorModel& fm, const std::filesystem::path& path);
FactorModel load_uschema(const std::filesystem::path& path);

}  // namespace mfus
