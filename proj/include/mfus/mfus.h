#ifndef MFUS_MFUS_H
#define MFUS_MFUS_H

/* C interface to the multi-facet relation library. Every call returns a
   status; on failure mfus_last_error() describes it (per thread). Handles are
   opaque and released with their matching *_free. */

#include <stddef.h>

#if defined(MFUS_BUILDING_LIBRARY)
#define MFUS_API __attribute__((visibility("default")))
#else
#define MFUS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfus_status {
  MFUS_OK = 0,
  MFUS_ERR_PARSE = 1,
  MFUS_ERR_EMPTY_INPUT = 2,
  MFUS_ERR_CONFIG = 3,
  MFUS_ERR_SHAPE = 4,
  MFUS_ERR_INVARIANT = 5,
  MFUS_ERR_IO = 6,
  MFUS_ERR_NUMERIC = 7,
  MFUS_ERR_FORMAT = 8,
  MFUS_ERR_ARGUMENT = 9,
  MFUS_ERR_INTERNAL = 10
} mfus_status;

typedef enum mfus_row_kind { MFUS_PATTERN = 0, MFUS_KB_RELATION = 1 } mfus_row_kind;

typedef struct mfus_matrix mfus_matrix;
typedef struct mfus_model mfus_model;

MFUS_API const char* mfus_version(void);
MFUS_API const char* mfus_last_error(void);
MFUS_API const char* mfus_status_name(mfus_status status);

/* Runs a named command (train, eval-re, ...) with options given as a JSON
   object. On success *result_json holds a JSON summary; free it with
   mfus_string_free. */
MFUS_API mfus_status mfus_run_command(const char* command, const char* options_json,
                                      char** result_json);
/* Space-separated list of command names. */
MFUS_API const char* mfus_command_names(void);
MFUS_API void mfus_string_free(char* s);

MFUS_API mfus_status mfus_matrix_load(const char* path, mfus_matrix** out);
MFUS_API void mfus_matrix_free(mfus_matrix* m);
MFUS_API mfus_status mfus_matrix_rows(const mfus_matrix* m, size_t* out);
MFUS_API mfus_status mfus_matrix_cols(const mfus_matrix* m, size_t* out);
MFUS_API mfus_status mfus_matrix_positives(const mfus_matrix* m, size_t* out);

MFUS_API mfus_status mfus_model_load(const char* path, mfus_model** out);
MFUS_API void mfus_model_free(mfus_model* model);
/* Facets of `text` written row-major into out[capacity]. *k and *d receive
   the shape; MFUS_ERR_ARGUMENT when capacity is below k*d. */
MFUS_API mfus_status mfus_model_facets(const mfus_model* model, const char* text,
                                       mfus_row_kind kind, double* out, size_t capacity,
                                       size_t* k, size_t* d);
/* scores[4] = {asym(a,b), asym(b,a), sim, ours_diff}. */
MFUS_API mfus_status mfus_model_score(const mfus_model* model, const char* a, mfus_row_kind kind_a,
                                      const char* b, mfus_row_kind kind_b, double* scores);

/* Directional coverage of row-major facet sets a (ka x d) and b (kb x d). */
MFUS_API mfus_status mfus_asym(const double* a, size_t ka, const double* b, size_t kb, size_t d,
                               double* out);

#ifdef __cplusplus
}
#endif

#endif
