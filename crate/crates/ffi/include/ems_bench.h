#ifndef EMS_BENCH_H
#define EMS_BENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EmsStatus {
  EMS_STATUS_OK = 0,
  EMS_STATUS_NULL_POINTER = 1,
  EMS_STATUS_INVALID_ARGUMENT = 2,
  EMS_STATUS_SIMULATION = 3,
  EMS_STATUS_PARSE = 4,
  EMS_STATUS_PANIC = 5,
} EmsStatus;

/**
 * Which controller `ems_scenario_run` uses.
 */
typedef enum EmsControllerKind {
  EMS_CONTROLLER_KIND_RBC = 0,
  /**
   * Random exploration; unsafe without the safety layer.
   */
  EMS_CONTROLLER_KIND_STUB = 1,
  /**
   * Needs a policy handle.
   */
  EMS_CONTROLLER_KIND_TREE_C = 2,
  /**
   * MPC with perfect foresight.
   */
  EMS_CONTROLLER_KIND_MPC_PERFECT = 3,
} EmsControllerKind;

/**
 * Opaque pair of TreeC decision trees.
 */
typedef struct EmsPolicy EmsPolicy;

/**
 * Opaque house, data and simulation settings.
 */
typedef struct EmsScenario EmsScenario;

/**
 * Opaque tariff parameters.
 */
typedef struct EmsTariff EmsTariff;

typedef struct EmsCost {
  double day_ahead;
  double offtake_extras;
  double peak;
  double yearly;
  double total;
} EmsCost;

typedef struct EmsRunSummary {
  struct EmsCost cost;
  struct EmsCost net_cost;
  /**
   * kWh
   */
  double imported;
  /**
   * kWh
   */
  double exported;
  double exceedance_wh;
  uint32_t safety_activations;
  uint32_t steps;
  double final_bess_soc;
} EmsRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length, 0 when none.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t ems_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ems_version(void);

/**
 * Default tariff.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EmsStatus ems_tariff_new(struct EmsTariff **out);

/**
 * Overrides the peak price (€/kW per month) and floor (kW).
 *
 * # Safety
 * `tariff` must come from `ems_tariff_new`.
 */
enum EmsStatus ems_tariff_set_peak(struct EmsTariff *tariff, double price, double floor);

/**
 * # Safety
 * `tariff` must come from `ems_tariff_new` or be null.
 */
void ems_tariff_free(struct EmsTariff *tariff);

/**
 * Cost of `n` 15-minute steps starting at `start` ("YYYY-MM-DDTHH:MM").
 * `offtake` and `injection` are kWh per step, `prices` day-ahead €/kWh per
 * step. `net` selects net-consumption metering.
 *
 * # Safety
 * Arrays must hold `n` values; `out` must be valid.
 */
enum EmsStatus ems_tariff_cost(const struct EmsTariff *tariff,
                               const char *start,
                               const double *offtake,
                               const double *injection,
                               const double *prices,
                               size_t n,
                               bool net,
                               struct EmsCost *out);

/**
 * Scenario for reference house `house_id` (1..4) with `n` 15-minute
 * samples from `start`: load and PV in kW, prices in €/kWh.
 *
 * # Safety
 * Arrays must hold `n` values; `out` must be valid.
 */
enum EmsStatus ems_scenario_new(uint8_t house_id,
                                const char *start,
                                const double *load,
                                const double *pv,
                                const double *prices,
                                size_t n,
                                struct EmsScenario **out);

/**
 * # Safety
 * `scenario` must come from `ems_scenario_new` or be null.
 */
void ems_scenario_free(struct EmsScenario *scenario);

/**
 * Adds an EV charging session.
 *
 * # Safety
 * `scenario` must be a live handle; strings NUL-terminated.
 */
enum EmsStatus ems_scenario_add_session(struct EmsScenario *scenario,
                                        const char *arrival,
                                        const char *departure,
                                        double soc_start,
                                        double soc_goal);

/**
 * Switches the safety layer on or off and sets the initial BESS SOC.
 *
 * # Safety
 * `scenario` must be a live handle.
 */
enum EmsStatus ems_scenario_configure(struct EmsScenario *scenario,
                                      bool safety,
                                      double initial_bess_soc);

/**
 * Simulates `days` days from `from` ("YYYY-MM-DDTHH:MM", on the 15-minute
 * grid). `policy` is only read for `EMS_CONTROLLER_KIND_TREE_C`; `seed` only
 * for the stub.
 *
 * # Safety
 * Handles must be live or null where allowed; `out` must be valid.
 */
enum EmsStatus ems_scenario_run(const struct EmsScenario *scenario,
                                enum EmsControllerKind kind,
                                const struct EmsPolicy *policy,
                                uint64_t seed,
                                const char *from,
                                uint32_t days,
                                struct EmsRunSummary *out);

/**
 * Parses a policy in the tree text format (`bess: ...` and `ev: ...`
 * lines).
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be valid.
 */
enum EmsStatus ems_policy_parse(const char *text, struct EmsPolicy **out);

/**
 * # Safety
 * `policy` must come from `ems_policy_parse` or be null.
 */
void ems_policy_free(struct EmsPolicy *policy);

/**
 * Number of leaves of the BESS and EV trees.
 *
 * # Safety
 * `policy` must be live; outputs valid.
 */
enum EmsStatus ems_policy_leaves(const struct EmsPolicy *policy, size_t *bess, size_t *ev);

/**
 * Writes a 48-day house-switching schedule as 48 × 4 EMS codes (0 RL-stub,
 * 1 RBC, 2 TreeC, 3 MPC), day-major. `len` must be at least 192.
 *
 * # Safety
 * `out` must be valid for `len` bytes.
 */
enum EmsStatus ems_schedule_generate(uint64_t seed, uint8_t *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMS_BENCH_H */
