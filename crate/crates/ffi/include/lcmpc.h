#ifndef LCMPC_H
#define LCMPC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LcmpcStatus {
  LCMPC_STATUS_OK = 0,
  // Numerical or I/O failure.
  LCMPC_STATUS_ERROR = 1,
  // Malformed configuration.
  LCMPC_STATUS_SCHEMA = 2,
  // No cycle, no tube, or an infeasible control problem.
  LCMPC_STATUS_INFEASIBLE = 3,
  // A designed certificate failed its check.
  LCMPC_STATUS_VERIFICATION = 4,
  LCMPC_STATUS_NULL_POINTER = 5,
  LCMPC_STATUS_INVALID_ARGUMENT = 6,
  LCMPC_STATUS_PANIC = 7,
} LcmpcStatus;

// Designed controller plus the artifacts it was built from.
typedef struct LcmpcController LcmpcController;

// Sizes of a designed controller.
typedef struct LcmpcDims {
  size_t n_x;
  size_t n_u;
  size_t n_inputs;
  size_t period;
  size_t horizon;
} LcmpcDims;

// Result of one optimization.
typedef struct LcmpcSolution {
  bool feasible;
  double value;
  size_t first_input_index;
  uint64_t nodes_expanded;
  uint64_t nodes_pruned;
} LcmpcSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *lcmpc_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next call into the library from the same thread.
const char *lcmpc_last_error(void);

// Designs cycle, terminal cost and tube from a JSON configuration and
// builds the controller.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum LcmpcStatus lcmpc_controller_new(const char *config_json, struct LcmpcController **out);

// # Safety
// `ctrl` must come from [`lcmpc_controller_new`] and not be used afterwards.
void lcmpc_controller_free(struct LcmpcController *ctrl);

// # Safety
// `ctrl` and `out` must be valid pointers.
enum LcmpcStatus lcmpc_controller_dims(const struct LcmpcController *ctrl, struct LcmpcDims *out);

// Sets the worker count of the tree search.
//
// # Safety
// `ctrl` must be a valid pointer.
enum LcmpcStatus lcmpc_controller_set_threads(struct LcmpcController *ctrl, size_t threads);

// Copies cycle state `x̄(j mod p)` into `out` (`len` must equal `n_x`).
//
// # Safety
// `out` must hold `len` doubles.
enum LcmpcStatus lcmpc_controller_cycle_state(const struct LcmpcController *ctrl,
                                              size_t j,
                                              double *out,
                                              size_t len);

// Solves the tracking problem at state `x` and time `k`. The optimal input
// indices are written to `indices` when it is non-NULL (`indices_len` must
// then equal the horizon). Returns [`LcmpcStatus::Infeasible`] with
// `out->feasible == false` when no admissible sequence exists.
//
// # Safety
// `x` must hold `n_x` doubles, `out` must be valid, and `indices` must be
// NULL or hold `indices_len` entries.
enum LcmpcStatus lcmpc_controller_solve(const struct LcmpcController *ctrl,
                                        const double *x,
                                        size_t n_x,
                                        size_t k,
                                        struct LcmpcSolution *out,
                                        size_t *indices,
                                        size_t indices_len);

// Applies input `input_index` to the plant: `next = A x + b`.
//
// # Safety
// `x` and `next` must each hold `n_x` doubles.
enum LcmpcStatus lcmpc_controller_plant_step(const struct LcmpcController *ctrl,
                                             const double *x,
                                             size_t n_x,
                                             size_t input_index,
                                             double *next);

// Canonical JSON object with the `cycle`, `terminal_cost` and `tube`
// artifacts. Release the string with [`lcmpc_string_free`].
//
// # Safety
// `ctrl` and `out` must be valid pointers.
enum LcmpcStatus lcmpc_controller_artifacts_json(const struct LcmpcController *ctrl, char **out);

// # Safety
// `s` must come from this library and not be used afterwards.
void lcmpc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCMPC_H */
