#ifndef HAMFORGE_H
#define HAMFORGE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every function.
 */
typedef enum HfStatus {
  HF_STATUS_OK = 0,
  HF_STATUS_NULL_POINTER = 1,
  HF_STATUS_INVALID_ARGUMENT = 2,
  HF_STATUS_EPISODE_DONE = 3,
  HF_STATUS_PARSE = 4,
  HF_STATUS_INVALID_MACHINE = 5,
  HF_STATUS_BUFFER_TOO_SMALL = 6,
  HF_STATUS_PANIC = 7,
  HF_STATUS_INTERNAL = 8,
} HfStatus;

/**
 * Values accepted by [`hf_env_preset`].
 */
typedef enum HfPreset {
  HF_PRESET_TRAINING_SMALL = 0,
  HF_PRESET_TRAINING_LARGE = 1,
  HF_PRESET_TEST = 2,
} HfPreset;

/**
 * An environment session.
 */
typedef struct HfEnv HfEnv;

/**
 * A machine graph.
 */
typedef struct HfMachine HfMachine;

/**
 * Snapshot of the manipulator.
 */
typedef struct HfObservation {
  uint32_t manip_col;
  uint32_t manip_row;
  bool magnet_on;
  bool holding;
  uint32_t steps_taken;
  bool done;
} HfObservation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *hf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *hf_version(void);

/**
 * Creates an environment. The cube layout is drawn from `layout_seed`.
 */
enum HfStatus hf_env_new(uint32_t grid_height,
                         uint32_t grid_width,
                         uint32_t num_cubes,
                         uint32_t episode_length,
                         uint32_t tower_target,
                         uint64_t layout_seed,
                         struct HfEnv **out);

/**
 * Creates one of the preset environments; `preset` is an `HfPreset` value.
 */
enum HfStatus hf_env_preset(uint32_t preset, uint64_t layout_seed, struct HfEnv **out);

/**
 * Restores the initial layout.
 */
enum HfStatus hf_env_reset(struct HfEnv *env);

/**
 * Applies action `action` (0 Left, 1 Right, 2 Up, 3 Down, 4 ToggleMagnet).
 */
enum HfStatus hf_env_step(struct HfEnv *env, uint32_t action, double *out_reward, bool *out_done);

enum HfStatus hf_env_observe(const struct HfEnv *env, struct HfObservation *out);

/**
 * Whether a cube occupies the cell; rows count from the floor.
 */
enum HfStatus hf_env_cell(const struct HfEnv *env, uint32_t col, uint32_t row, bool *out_cube);

enum HfStatus hf_env_cluster(const struct HfEnv *env, uint32_t *out_height, bool *out_holding);

void hf_env_free(struct HfEnv *env);

/**
 * Parses a machine from its text form.
 */
enum HfStatus hf_machine_parse(const char *text, struct HfMachine **out);

/**
 * Parses a machine from Graphviz DOT produced by [`hf_machine_to_dot`].
 */
enum HfStatus hf_machine_parse_dot(const char *text, struct HfMachine **out);

/**
 * The looping machine that chooses among all five primitive actions.
 */
enum HfStatus hf_machine_standard(struct HfMachine **out);

/**
 * Sets `out_valid`; when invalid, the violations are also available from
 * [`hf_last_error_message`].
 */
enum HfStatus hf_machine_validate(const struct HfMachine *m, bool *out_valid);

enum HfStatus hf_machine_counts(const struct HfMachine *m,
                                uint32_t *out_vertices,
                                uint32_t *out_edges);

/**
 * Writes the text form and a NUL into `buf` of `cap` bytes. `out_len`
 * always receives the length without the NUL; `HfStatus::BufferTooSmall`
 * means the call should be repeated with a larger buffer.
 */
enum HfStatus hf_machine_to_text(const struct HfMachine *m, char *buf, size_t cap, size_t *out_len);

/**
 * DOT counterpart of [`hf_machine_to_text`].
 */
enum HfStatus hf_machine_to_dot(const struct HfMachine *m, char *buf, size_t cap, size_t *out_len);

void hf_machine_free(struct HfMachine *m);

/**
 * Counts candidate machines. Bit `i` of `action_mask` enables action `i`
 * in the order used by [`hf_env_step`].
 */
enum HfStatus hf_enumerate_count(uint32_t max_vertices,
                                 uint32_t action_mask,
                                 uint32_t per_action,
                                 uint32_t max_choice,
                                 uint64_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAMFORGE_H */
