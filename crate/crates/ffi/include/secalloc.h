#ifndef SECALLOC_H
#define SECALLOC_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SecallocStatus {
  SECALLOC_STATUS_OK = 0,
  SECALLOC_STATUS_UNSCHEDULABLE = 1,
  SECALLOC_STATUS_INVALID_INPUT = 2,
  SECALLOC_STATUS_LIMIT_EXCEEDED = 3,
  SECALLOC_STATUS_NULL_POINTER = 4,
  SECALLOC_STATUS_INTERNAL = 5,
} SecallocStatus;

typedef enum SecallocScheme {
  SECALLOC_SCHEME_HYDRA = 0,
  SECALLOC_SCHEME_SINGLE_CORE = 1,
  SECALLOC_SCHEME_OPTIMAL = 2,
} SecallocScheme;

/**
 * The result of one allocation run, schedulable or not.
 */
typedef struct SecallocAllocation SecallocAllocation;

/**
 * A validated, partitioned system configuration.
 */
typedef struct SecallocConfig SecallocConfig;

/**
 * One security task's placement. `id` is owned by the allocation handle.
 */
typedef struct SecallocPlacement {
  const char *id;
  size_t core;
  uint64_t period_us;
  double tightness;
} SecallocPlacement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a taskset document. Real-time tasks without a core are
 * partitioned; if that fails the status is `UNSCHEDULABLE`.
 */
enum SecallocStatus secalloc_config_from_toml(const char *text, struct SecallocConfig **out);

void secalloc_config_free(struct SecallocConfig *config);

size_t secalloc_config_core_count(const struct SecallocConfig *config);

size_t secalloc_config_security_task_count(const struct SecallocConfig *config);

/**
 * `OK` when the config satisfies every model invariant, else
 * `INVALID_INPUT` with the violations in the last error.
 */
enum SecallocStatus secalloc_config_validate(const struct SecallocConfig *config);

/**
 * Runs `scheme` on `config`. On `OK` and `UNSCHEDULABLE` a new allocation
 * handle is stored in `out`. `max_assignments` only applies to `OPTIMAL`.
 */
enum SecallocStatus secalloc_allocate(const struct SecallocConfig *config,
                                      enum SecallocScheme scheme,
                                      uint64_t max_assignments,
                                      struct SecallocAllocation **out);

void secalloc_allocation_free(struct SecallocAllocation *alloc);

bool secalloc_allocation_is_schedulable(const struct SecallocAllocation *alloc);

/**
 * Weighted cumulative tightness, or NaN for a null handle.
 */
double secalloc_allocation_objective(const struct SecallocAllocation *alloc);

/**
 * Id of the task the allocator could not place, or NULL.
 */
const char *secalloc_allocation_failing_task(const struct SecallocAllocation *alloc);

/**
 * Number of placed security tasks, in security-priority order.
 */
size_t secalloc_allocation_task_count(const struct SecallocAllocation *alloc);

enum SecallocStatus secalloc_allocation_task(const struct SecallocAllocation *alloc,
                                             size_t index,
                                             struct SecallocPlacement *out);

/**
 * The allocation as a TOML document; free with [`secalloc_string_free`].
 */
char *secalloc_allocation_to_toml(const struct SecallocAllocation *alloc);

void secalloc_string_free(char *s);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *secalloc_last_error(void);

/**
 * Demand bound of an implicit-deadline task over an interval of `t_us`.
 * Returns 0 for a zero period.
 */
uint64_t secalloc_dbf(uint64_t wcet_us, uint64_t period_us, uint64_t t_us);

/**
 * Fraction of the `len` samples at or below `x_us`.
 */
enum SecallocStatus secalloc_empirical_cdf(const uint64_t *samples_us,
                                           size_t len,
                                           uint64_t x_us,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SECALLOC_H */
