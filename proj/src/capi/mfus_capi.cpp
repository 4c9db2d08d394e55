#include "mfus/mfus.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "json.hpp"
#include "mfus/corpus.hpp"
#include "mfus/error.hpp"
#include "mfus/model.hpp"
#include "mfus/pipeline.hpp"
#include "mfus/scoring.hpp"

struct mfus_matrix {
  mfus::CooccurrenceMatrix value;
};

struct mfus_model {
  mfus::FacetModel value;
};

namespace {

thread_local std::string g_last_error;

mfus_status status_of(mfus::ErrorKind kind) {
  switch (kind) {
    case mfus::ErrorKind::Parse: return MFUS_ERR_PARSE;
    case mfus::ErrorKind::EmptyInput: return MFUS_ERR_EMPTY_INPUT;
    case mfus::ErrorKind::Config: return MFUS_ERR_CONFIG;
    case mfus::ErrorKind::Shape: return MFUS_ERR_SHAPE;
    case mfus::ErrorKind::Invariant: return MFUS_ERR_INVARIANT;
    case mfus::ErrorKind::Io: return MFUS_ERR_IO;
    case mfus::ErrorKind::Numeric: return MFUS_ERR_NUMERIC;
    case mfus::ErrorKind::Format: return MFUS_ERR_FORMAT;
  }
  return MFUS_ERR_INTERNAL;
}

template <typename F>
mfus_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MFUS_OK;
  } catch (const mfus::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("invalid JSON: ") + e.what();
    return MFUS_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MFUS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return MFUS_ERR_INTERNAL;
  }
}

mfus_status bad_argument(const char* what) {
  g_last_error = what;
  return MFUS_ERR_ARGUMENT;
}

mfus::RowKind row_kind(mfus_row_kind k) {
  return k == MFUS_KB_RELATION ? mfus::RowKind::KBRelation : mfus::RowKind::Pattern;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* mfus_version(void) { return mfus::kVersion; }

const char* mfus_last_error(void) { return g_last_error.c_str(); }

const char* mfus_status_name(mfus_status status) {
  switch (status) {
    case MFUS_OK: return "ok";
    case MFUS_ERR_PARSE: return "parse";
    case MFUS_ERR_EMPTY_INPUT: return "empty_input";
    case MFUS_ERR_CONFIG: return "config";
    case MFUS_ERR_SHAPE: return "shape";
    case MFUS_ERR_INVARIANT: return "invariant";
    case MFUS_ERR_IO: return "io";
    case MFUS_ERR_NUMERIC: return "numeric";
    case MFUS_ERR_FORMAT: return "format";
    case MFUS_ERR_ARGUMENT: return "argument";
    case MFUS_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

mfus_status mfus_run_command(const char* command, const char* options_json, char** result_json) {
  if (!command || !options_json || !result_json) return bad_argument("null argument");
  *result_json = nullptr;
  return guarded([&] {
    const auto opts = nlohmann::json::parse(options_json);
    *result_json = dup_string(mfus::run_command(command, opts).dump());
  });
}

const char* mfus_command_names(void) {
  static const std::string names = [] {
    std::string s;
    for (const auto& n : mfus::command_names()) s += (s.empty() ? "" : " ") + n;
    return s;
  }();
  return names.c_str();
}

void mfus_string_free(char* s) { std::free(s); }

mfus_status mfus_matrix_load(const char* path, mfus_matrix** out) {
  if (!path || !out) return bad_argument("null argument");
  *out = nullptr;
  return guarded([&] { *out = new mfus_matrix{mfus::CooccurrenceMatrix::load(path)}; });
}

void mfus_matrix_free(mfus_matrix* m) { delete m; }

mfus_status mfus_matrix_rows(const mfus_matrix* m, size_t* out) {
  if (!m || !out) return bad_argument("null argument");
  *out = m->value.row_count();
  return MFUS_OK;
}

mfus_status mfus_matrix_cols(const mfus_matrix* m, size_t* out) {
  if (!m || !out) return bad_argument("null argument");
  *out = m->value.col_count();
  return MFUS_OK;
}

mfus_status mfus_matrix_positives(const mfus_matrix* m, size_t* out) {
  if (!m || !out) return bad_argument("null argument");
  *out = m->value.positives().size();
  return MFUS_OK;
}

mfus_status mfus_model_load(const char* path, mfus_model** out) {
  if (!path || !out) return bad_argument("null argument");
  *out = nullptr;
  return guarded([&] { *out = new mfus_model{mfus::load_checkpoint(path)}; });
}

void mfus_model_free(mfus_model* model) { delete model; }

mfus_status mfus_model_facets(const mfus_model* model, const char* text, mfus_row_kind kind,
                              double* out, size_t capacity, size_t* k, size_t* d) {
  if (!model || !text || !k || !d) return bad_argument("null argument");
  mfus::FacetSet f;
  const mfus_status st =
      guarded([&] { f = model->value.infer(mfus::tokenize(text), row_kind(kind)); });
  if (st != MFUS_OK) return st;
  *k = f.facets.rows;
  *d = f.facets.cols;
  if (!out || capacity < f.facets.data.size()) return bad_argument("output buffer too small");
  std::copy(f.facets.data.begin(), f.facets.data.end(), out);
  return MFUS_OK;
}

mfus_status mfus_model_score(const mfus_model* model, const char* a, mfus_row_kind kind_a,
                             const char* b, mfus_row_kind kind_b, double* scores) {
  if (!model || !a || !b || !scores) return bad_argument("null argument");
  return guarded([&] {
    const auto fa = model->value.infer(mfus::tokenize(a), row_kind(kind_a));
    const auto fb = model->value.infer(mfus::tokenize(b), row_kind(kind_b));
    const auto p = mfus::score_pair(0, 1, fa, fb);
    scores[0] = p.asym_ij;
    scores[1] = p.asym_ji;
    scores[2] = p.sim;
    scores[3] = p.ours_diff;
  });
}

mfus_status mfus_asym(const double* a, size_t ka, const double* b, size_t kb, size_t d,
                      double* out) {
  if (!a || !b || !out) return bad_argument("null argument");
  if (ka == 0 || kb == 0 || d == 0) return bad_argument("facet sets must be non-empty");
  return guarded([&] {
    mfus::FacetSet fa{mfus::nn::Mat(ka, d)};
    mfus::FacetSet fb{mfus::nn::Mat(kb, d)};
    std::copy(a, a + ka * d, fa.facets.data.begin());
    std::copy(b, b + kb * d, fb.facets.data.begin());
    *out = mfus::asym(fa, fb);
  });
}

}  // extern "C"
