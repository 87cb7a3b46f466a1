#ifndef BEVNAV_H
#define BEVNAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BevnavStatus {
  BEVNAV_STATUS_OK = 0,
  BEVNAV_STATUS_NULL_ARGUMENT = 1,
  BEVNAV_STATUS_INVALID_ARGUMENT = 2,
  BEVNAV_STATUS_DEGENERATE = 3,
  BEVNAV_STATUS_IO = 4,
  BEVNAV_STATUS_CONFIG = 5,
  BEVNAV_STATUS_PIPELINE = 6,
  BEVNAV_STATUS_PLAN = 7,
  BEVNAV_STATUS_BUFFER_TOO_SMALL = 8,
  BEVNAV_STATUS_PANIC = 99,
} BevnavStatus;

// Opaque cost grid.
typedef struct BevnavCostGrid BevnavCostGrid;

// Opaque perspective-to-BEV homography.
typedef struct BevnavHomography BevnavHomography;

// Opaque planned path.
typedef struct BevnavPath BevnavPath;

// Opaque resolved pipeline configuration.
typedef struct BevnavPipeline BevnavPipeline;

// Step counts from comparing a planned path against a label path.
typedef struct BevnavEvalCounts {
  size_t steps_in_result;
  size_t steps_in_label;
  size_t matching_steps;
  size_t different_steps;
} BevnavEvalCounts;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or NULL. The pointer stays valid until
// the next bevnav call on the same thread.
const char *bevnav_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a string returned by a bevnav function, freed once.
void bevnav_string_free(char *s);

// Estimates the homography mapping `src` onto `dst`. Each array holds four
// points as interleaved `x, y` (8 doubles).
//
// # Safety
// `src` and `dst` must point at 8 doubles; `out` must be writable.
enum BevnavStatus bevnav_homography_estimate(const double *src,
                                             const double *dst,
                                             struct BevnavHomography **out);

// Wraps a row-major 3x3 matrix.
//
// # Safety
// `m` must point at 9 doubles; `out` must be writable.
enum BevnavStatus bevnav_homography_from_matrix(const double *m, struct BevnavHomography **out);

// Copies the row-major matrix into `out` (9 doubles).
//
// # Safety
// `h` must be a live handle; `out` must point at 9 writable doubles.
enum BevnavStatus bevnav_homography_matrix(const struct BevnavHomography *h, double *out);

// Projects `(x, y)` through `h`.
//
// # Safety
// `h` must be a live handle; `out_x` and `out_y` must be writable.
enum BevnavStatus bevnav_homography_project(const struct BevnavHomography *h,
                                            double x,
                                            double y,
                                            double *out_x,
                                            double *out_y);

// Creates a new handle holding the inverse of `h`.
//
// # Safety
// `h` must be a live handle; `out` must be writable.
enum BevnavStatus bevnav_homography_invert(const struct BevnavHomography *h,
                                           struct BevnavHomography **out);

// # Safety
// `h` must be NULL or a live handle, freed once.
void bevnav_homography_free(struct BevnavHomography *h);

// Builds a grid from `rows * cols` row-major cell costs.
//
// # Safety
// `costs` must point at `len` doubles; `out` must be writable.
enum BevnavStatus bevnav_grid_new(uint32_t rows,
                                  uint32_t cols,
                                  uint32_t cell_mm,
                                  const double *costs,
                                  size_t len,
                                  struct BevnavCostGrid **out);

// # Safety
// `g` must be NULL or a live handle, freed once.
void bevnav_grid_free(struct BevnavCostGrid *g);

// A* from `(start_row, start_col)` to `(goal_row, goal_col)`.
//
// # Safety
// `grid` must be a live handle; `out` must be writable.
enum BevnavStatus bevnav_plan_astar(const struct BevnavCostGrid *grid,
                                    uint32_t start_row,
                                    uint32_t start_col,
                                    uint32_t goal_row,
                                    uint32_t goal_col,
                                    struct BevnavPath **out);

// Dijkstra reference search; same arguments as `bevnav_plan_astar`.
//
// # Safety
// `grid` must be a live handle; `out` must be writable.
enum BevnavStatus bevnav_plan_dijkstra(const struct BevnavCostGrid *grid,
                                       uint32_t start_row,
                                       uint32_t start_col,
                                       uint32_t goal_row,
                                       uint32_t goal_col,
                                       struct BevnavPath **out);

// Number of cells on the path (steps + 1). Returns 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
size_t bevnav_path_len(const struct BevnavPath *p);

// Number of 4-connected moves on the path. Returns 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
size_t bevnav_path_steps(const struct BevnavPath *p);

// Sum of entered-cell costs. Returns NaN for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
double bevnav_path_total_cost(const struct BevnavPath *p);

// Nodes expanded by the search. Returns 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
uint64_t bevnav_path_expanded(const struct BevnavPath *p);

// Copies the cells as interleaved `row, col` pairs into `out`, which holds
// `capacity` pairs. Fails with `BEVNAV_STATUS_BUFFER_TOO_SMALL` if the path
// is longer; query `bevnav_path_len` first.
//
// # Safety
// `p` must be a live handle; `out` must point at `2 * capacity` u32s.
enum BevnavStatus bevnav_path_cells(const struct BevnavPath *p, uint32_t *out, size_t capacity);

// Serializes the path as JSON. Free the string with `bevnav_string_free`.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
enum BevnavStatus bevnav_path_to_json(const struct BevnavPath *p, char **out);

// # Safety
// `p` must be NULL or a live handle, freed once.
void bevnav_path_free(struct BevnavPath *p);

// Loads and validates a pipeline configuration file. Relative paths inside
// it resolve against the file's directory.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum BevnavStatus bevnav_pipeline_load(const char *path, struct BevnavPipeline **out);

// Plans on an 8-bit label image given as `width * height` row-major bytes.
//
// # Safety
// `pipeline` must be a live handle; `labels` must point at
// `width * height` bytes; `out` must be writable.
enum BevnavStatus bevnav_pipeline_plan_labels(const struct BevnavPipeline *pipeline,
                                              uint32_t width,
                                              uint32_t height,
                                              const uint8_t *labels,
                                              struct BevnavPath **out);

// Plans on a grayscale label PNG read from `path`.
//
// # Safety
// `pipeline` must be a live handle; `path` must be a NUL-terminated string;
// `out` must be writable.
enum BevnavStatus bevnav_pipeline_plan_file(const struct BevnavPipeline *pipeline,
                                            const char *path,
                                            struct BevnavPath **out);

// # Safety
// `p` must be NULL or a live handle, freed once.
void bevnav_pipeline_free(struct BevnavPipeline *p);

// Compares a planned path against a label path on the same grid.
//
// # Safety
// Both paths must be live handles; `out` must be writable.
enum BevnavStatus bevnav_compare_paths(const struct BevnavPath *result,
                                       const struct BevnavPath *label,
                                       struct BevnavEvalCounts *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEVNAV_H */
