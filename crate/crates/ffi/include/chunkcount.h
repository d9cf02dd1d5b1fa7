#ifndef CHUNKCOUNT_H
#define CHUNKCOUNT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every exported function.
typedef enum ChunkcountStatus {
  CHUNKCOUNT_STATUS_OK = 0,
  // A required pointer argument was null.
  CHUNKCOUNT_STATUS_NULL_ARGUMENT = 1,
  // An argument was out of range or not valid UTF-8.
  CHUNKCOUNT_STATUS_INVALID_ARGUMENT = 2,
  // A file could not be read or written.
  CHUNKCOUNT_STATUS_IO = 3,
  // A document was malformed or violated a constraint.
  CHUNKCOUNT_STATUS_INVALID_CONFIG = 4,
  // Counting failed.
  CHUNKCOUNT_STATUS_PIPELINE = 5,
  // Internal error; the library state is unchanged.
  CHUNKCOUNT_STATUS_PANIC = 6,
} ChunkcountStatus;

// Frame-ordered detection stream.
typedef struct ChunkcountDetections ChunkcountDetections;

// Result of a counting run.
typedef struct ChunkcountReport ChunkcountReport;

// Validated scene configuration.
typedef struct ChunkcountScene ChunkcountScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null after a
// successful call. Valid until the next call into the library.
const char *chunkcount_last_error(void);

// Library version as a static NUL-terminated string.
const char *chunkcount_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void chunkcount_string_free(char *s);

// Loads and validates a scene file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ChunkcountStatus chunkcount_scene_load(const char *path, struct ChunkcountScene **out);

// Parses and validates a scene document held in memory.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum ChunkcountStatus chunkcount_scene_from_json(const char *json, struct ChunkcountScene **out);

// Canonical JSON document for the scene.
//
// # Safety
// `scene` must be a live handle; `out` must be writable.
enum ChunkcountStatus chunkcount_scene_to_json(const struct ChunkcountScene *scene, char **out);

// # Safety
// `scene` must be null or a live handle; it is invalid afterwards.
void chunkcount_scene_free(struct ChunkcountScene *scene);

// Reads a JSON Lines detection file, ordered by frame.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum ChunkcountStatus chunkcount_detections_read(const char *path,
                                                 struct ChunkcountDetections **out);

// Parses JSON Lines detections held in memory.
//
// # Safety
// `jsonl` must be a NUL-terminated string; `out` must be writable.
enum ChunkcountStatus chunkcount_detections_parse(const char *jsonl,
                                                  struct ChunkcountDetections **out);

// Number of detections in the stream.
//
// # Safety
// `dets` must be a live handle; `out` must be writable.
enum ChunkcountStatus chunkcount_detections_len(const struct ChunkcountDetections *dets,
                                                uintptr_t *out);

// # Safety
// `dets` must be null or a live handle; it is invalid afterwards.
void chunkcount_detections_free(struct ChunkcountDetections *dets);

// Counts with `chunks` chunks on `workers` threads. `total_frames` of 0
// means one past the last detection frame.
//
// # Safety
// `scene` and `dets` must be live handles; `out` must be writable.
enum ChunkcountStatus chunkcount_run(const struct ChunkcountScene *scene,
                                     const struct ChunkcountDetections *dets,
                                     uintptr_t chunks,
                                     uintptr_t workers,
                                     bool dedup,
                                     uint64_t total_frames,
                                     struct ChunkcountReport **out);

// Single-pass reference count.
//
// # Safety
// `scene` and `dets` must be live handles; `out` must be writable.
enum ChunkcountStatus chunkcount_run_single(const struct ChunkcountScene *scene,
                                            const struct ChunkcountDetections *dets,
                                            uint64_t total_frames,
                                            struct ChunkcountReport **out);

// Total vehicle count of the run.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum ChunkcountStatus chunkcount_report_total(const struct ChunkcountReport *report, uint64_t *out);

// Counted vehicles of chunk `index`.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum ChunkcountStatus chunkcount_report_chunk_counted(const struct ChunkcountReport *report,
                                                      uintptr_t index,
                                                      uint64_t *out);

// Canonical one-line JSON form of the report, newline-terminated.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum ChunkcountStatus chunkcount_report_to_json(const struct ChunkcountReport *report, char **out);

// Appends the report to a JSON Lines results store.
//
// # Safety
// `store` must be a NUL-terminated string; `report` a live handle.
enum ChunkcountStatus chunkcount_report_append(const char *store,
                                               const struct ChunkcountReport *report);

// # Safety
// `report` must be null or a live handle; it is invalid afterwards.
void chunkcount_report_free(struct ChunkcountReport *report);

// Minimum-cost assignment over a row-major `rows x cols` matrix. Entries
// above `forbid_threshold` are never paired (pass infinity to allow all).
// Writes the matched column of each row to `row_to_col`, or -1.
//
// # Safety
// `costs` must hold `rows * cols` values and `row_to_col` room for `rows`.
enum ChunkcountStatus chunkcount_solve_assignment(const double *costs,
                                                  uintptr_t rows,
                                                  uintptr_t cols,
                                                  double forbid_threshold,
                                                  int64_t *row_to_col);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHUNKCOUNT_H */
