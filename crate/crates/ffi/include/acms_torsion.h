#ifndef ACMS_TORSION_H
#define ACMS_TORSION_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum AcmsStatus {
  ACMS_STATUS_OK = 0,
  ACMS_STATUS_NULL_POINTER = 1,
  ACMS_STATUS_INVALID_UTF8 = 2,
  ACMS_STATUS_PARSE = 3,
  ACMS_STATUS_INVALID_MODEL = 4,
  ACMS_STATUS_OUTSIDE_DOMAIN = 5,
  /**
   * The report was produced but an identity failed.
   */
  ACMS_STATUS_IDENTITY_FAILURE = 6,
  ACMS_STATUS_INTERNAL = 7,
} AcmsStatus;

/**
 * A frame model with its almost contact metric structure.
 */
typedef struct AcmsModel AcmsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a builtin model. `params_json` may be null.
 *
 * # Safety
 * `name` and `params_json` must be null or NUL-terminated; `out` must be writable.
 */
enum AcmsStatus acms_model_builtin(const char *name,
                                   const char *params_json,
                                   struct AcmsModel **out);

/**
 * Builds a model from the text of a model file. `params_json` overrides file
 * parameters and may be null.
 *
 * # Safety
 * `text` and `params_json` must be null or NUL-terminated; `out` must be writable.
 */
enum AcmsStatus acms_model_from_json(const char *text,
                                     const char *params_json,
                                     struct AcmsModel **out);

/**
 * # Safety
 * `model` must come from a constructor above and not be used afterwards.
 */
void acms_model_free(struct AcmsModel *model);

/**
 * Chart dimension `2n+1`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t acms_model_dim(const struct AcmsModel *model);

/**
 * Classification report for `count` points stored row by row (`count × dim`
 * values). A non-positive `tol` selects the default threshold.
 *
 * # Safety
 * `model` must be a live handle, `points` must hold `count × dim` values and
 * `out` must be writable.
 */
enum AcmsStatus acms_classify(const struct AcmsModel *model,
                              const double *points,
                              size_t count,
                              double tol,
                              char **out);

/**
 * Classification plus the identity suite. Returns `IDENTITY_FAILURE` with a
 * complete report when an identity fails.
 *
 * # Safety
 * As for `acms_classify`.
 */
enum AcmsStatus acms_verify(const struct AcmsModel *model,
                            const double *points,
                            size_t count,
                            bool full_tier,
                            char **out);

/**
 * Catalog of forbidden strict types for `n > 1`.
 *
 * # Safety
 * `out` must be writable.
 */
enum AcmsStatus acms_enumerate_types(size_t n, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed at most once.
 */
void acms_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *acms_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACMS_TORSION_H */
