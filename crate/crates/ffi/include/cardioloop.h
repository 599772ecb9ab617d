/* C interface of the cardioloop cardiocirculatory simulation library. */

#ifndef CARDIOLOOP_H
#define CARDIOLOOP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  CARDIOLOOP_STATUS_OK = 0,
  CARDIOLOOP_STATUS_NULL_ARGUMENT = 1,
  CARDIOLOOP_STATUS_INVALID_STRING = 2,
  CARDIOLOOP_STATUS_INVALID_INPUT = 3,
  CARDIOLOOP_STATUS_SOLVER_FAILURE = 4,
  CARDIOLOOP_STATUS_IO_ERROR = 5,
  CARDIOLOOP_STATUS_UNKNOWN_NAME = 6,
} CardioloopStatus;

/**
 * Parameter set handle.
 */
typedef struct CardioloopModel CardioloopModel;

/**
 * Simulated periodic beat handle.
 */
typedef struct CardioloopSim CardioloopSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cardioloop_version(void);

/**
 * Message of the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *cardioloop_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by a `*_json` function of this
 * library, not yet freed; null is ignored.
 */
void cardioloop_string_free(char *s);

/**
 * Creates a model with the bundled reference parameters.
 */
CardioloopModel *cardioloop_model_reference(void);

/**
 * Loads a model from a flat key-value JSON parameter file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string; `out` must point to
 * writable storage for one pointer.
 */
CardioloopStatus cardioloop_model_from_file(const char *path, CardioloopModel **out);

/**
 * Parses a model from flat key-value JSON text.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string; `out` must point to
 * writable storage for one pointer.
 */
CardioloopStatus cardioloop_model_from_json(const char *text, CardioloopModel **out);

/**
 * Serialises the model as flat key-value JSON; free with
 * [`cardioloop_string_free`].
 *
 * # Safety
 * `model` must be a live handle from this library.
 */
char *cardioloop_model_to_json(const CardioloopModel *model);

/**
 * Reads one parameter by its flat key (e.g. `"heart_rate_bpm"`,
 * `"valve.AV.r_open_mmHg_s_per_mL"`).
 *
 * # Safety
 * `model` must be a live handle; `key` a valid string; `out` writable.
 */
CardioloopStatus cardioloop_model_get(const CardioloopModel *model, const char *key, double *out);

/**
 * Overwrites one parameter by its flat key, revalidating the whole set.
 *
 * # Safety
 * `model` must be a live handle and `key` a valid string.
 */
CardioloopStatus cardioloop_model_set(CardioloopModel *model, const char *key, double value);

/**
 * Releases a model handle.
 *
 * # Safety
 * `model` must be a live handle from this library (or null); it must not be
 * used afterwards.
 */
void cardioloop_model_free(CardioloopModel *model);

/**
 * Integrates the model to its periodic steady state.
 *
 * `samples_per_beat` of zero picks the default grid (1000 points).
 *
 * # Safety
 * `model` must be a live handle; `out` must point to writable storage for
 * one pointer.
 */
CardioloopStatus cardioloop_simulate(const CardioloopModel *model,
                                     uintptr_t samples_per_beat,
                                     CardioloopSim **out);

/**
 * Beats integrated before the periodic state was accepted.
 *
 * # Safety
 * `sim` must be a live handle.
 */
uintptr_t cardioloop_sim_beats(const CardioloopSim *sim);

/**
 * Reads one named output (e.g. `"LV_EF"`, `"PWP_mean"`, `"ShuntFraction"`).
 *
 * # Safety
 * `sim` must be a live handle; `name` a valid string; `out` writable.
 */
CardioloopStatus cardioloop_sim_output(const CardioloopSim *sim, const char *name, double *out);

/**
 * All outputs as a JSON map; free with [`cardioloop_string_free`].
 *
 * # Safety
 * `sim` must be a live handle.
 */
char *cardioloop_sim_outputs_json(const CardioloopSim *sim);

/**
 * Writes the periodic beat as CSV with the time axis normalised to [0, 1).
 *
 * # Safety
 * `sim` must be a live handle and `path` a valid string.
 */
CardioloopStatus cardioloop_sim_write_transient_csv(const CardioloopSim *sim, const char *path);

/**
 * Releases a simulation handle.
 *
 * # Safety
 * `sim` must be a live handle from this library (or null); it must not be
 * used afterwards.
 */
void cardioloop_sim_free(CardioloopSim *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARDIOLOOP_H */
