/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef MEMCAM_H
#define MEMCAM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  MEMCAM_CAM_MODE_CAM = 0,
  MEMCAM_CAM_MODE_TCAM = 1,
} MemcamCamMode;

typedef enum {
  /**
   * Stored word below the key.
   */
  MEMCAM_MATCH_LESS = 0,
  MEMCAM_MATCH_GREATER = 1,
  MEMCAM_MATCH_EQUAL = 2,
  /**
   * Unequal, order unknown (CAM mode).
   */
  MEMCAM_MATCH_DIFFERS = 3,
} MemcamMatch;

typedef enum {
  MEMCAM_STATUS_OK = 0,
  MEMCAM_STATUS_NULL_POINTER = 1,
  MEMCAM_STATUS_INVALID_ARGUMENT = 2,
  MEMCAM_STATUS_DUPLICATE = 3,
  MEMCAM_STATUS_NOT_FOUND = 4,
  MEMCAM_STATUS_RANGE_UNSUPPORTED = 5,
  MEMCAM_STATUS_KEY_TOO_WIDE = 6,
  MEMCAM_STATUS_CAPACITY_EXCEEDED = 7,
  MEMCAM_STATUS_BUFFER_TOO_SMALL = 8,
  MEMCAM_STATUS_INTERNAL = 9,
} MemcamStatus;

typedef enum {
  MEMCAM_STRUCTURE_CMOS_T_TREE = 0,
  MEMCAM_STRUCTURE_MEM_T_TREE = 1,
  MEMCAM_STRUCTURE_TB_TREE = 2,
  MEMCAM_STRUCTURE_HASH_CAM = 3,
  MEMCAM_STRUCTURE_T_TREE_CAM = 4,
  MEMCAM_STRUCTURE_TB_TREE_CAM = 5,
  MEMCAM_STRUCTURE_MEM_CAM = 6,
} MemcamStructure;

/**
 * A single CAM/TCAM partition with its own array.
 */
typedef struct MemcamCam MemcamCam;

/**
 * A hybrid index.
 */
typedef struct MemcamIndex MemcamIndex;

/**
 * Cost of one operation.
 */
typedef struct {
  uint64_t step_count;
  double elapsed_ns;
  double energy_fj;
  uint64_t external_reads;
  uint64_t external_writes;
} MemcamStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never null.
 */
const char *memcam_status_str(MemcamStatus status);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the buffer size the full message needs.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes of writes.
 */
size_t memcam_last_error(char *buf, size_t len);

/**
 * Build an index over `n` records. `config_toml` holds index settings in
 * the CLI's `[index]` format without the table header (null for defaults).
 * Keys must be strictly unique; order does not matter.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string. `keys` and `refs`
 * must be valid for `n` reads (either may be null when `n` is 0). `out`
 * must be valid for one write.
 */
MemcamStatus memcam_index_build(const char *config_toml,
                                const uint64_t *keys,
                                const uint64_t *refs,
                                size_t n,
                                MemcamIndex **out);

/**
 * # Safety
 * `ix` must be null or a handle from `memcam_index_build` not yet freed.
 */
void memcam_index_free(MemcamIndex *ix);

/**
 * # Safety
 * `ix` must be a live handle; `out_len` valid for one write.
 */
MemcamStatus memcam_index_len(const MemcamIndex *ix, size_t *out_len);

/**
 * # Safety
 * `ix` must be a live handle not used concurrently.
 */
MemcamStatus memcam_index_insert(MemcamIndex *ix, uint64_t key, uint64_t value);

/**
 * Remove `key`. The removed value goes to `out_value` unless it is null.
 *
 * # Safety
 * `ix` must be a live handle not used concurrently; `out_value` null or
 * valid for one write.
 */
MemcamStatus memcam_index_delete(MemcamIndex *ix, uint64_t key, uint64_t *out_value);

/**
 * Point query. A missing key is not an error: `*out_found` is set to false.
 *
 * # Safety
 * `ix` must be a live handle not used concurrently; both out-pointers
 * valid for one write.
 */
MemcamStatus memcam_index_get(MemcamIndex *ix, uint64_t key, uint64_t *out_value, bool *out_found);

/**
 * Records with keys in `[lo, hi]`, ascending. `*out_len` receives the match
 * count; if it exceeds `cap`, nothing is copied and `BufferTooSmall` is
 * returned so the caller can retry with a larger buffer.
 *
 * # Safety
 * `ix` must be a live handle not used concurrently; `keys_out` and
 * `values_out` valid for `cap` writes (null allowed when `cap` is 0);
 * `out_len` valid for one write.
 */
MemcamStatus memcam_index_range(MemcamIndex *ix,
                                uint64_t lo,
                                uint64_t hi,
                                uint64_t *keys_out,
                                uint64_t *values_out,
                                size_t cap,
                                size_t *out_len);

/**
 * Move every partition to the next physical slot (wear leveling).
 *
 * # Safety
 * `ix` must be a live handle not used concurrently.
 */
MemcamStatus memcam_index_rotate(MemcamIndex *ix);

/**
 * Cost of the most recent operation.
 *
 * # Safety
 * `ix` must be a live handle; `out` valid for one write.
 */
MemcamStatus memcam_index_last_stats(const MemcamIndex *ix, MemcamStats *out);

/**
 * Busiest-cell write count and the lifetime it projects at `query_rate`
 * searches per second.
 *
 * # Safety
 * `ix` must be a live handle; out-pointers valid for one write.
 */
MemcamStatus memcam_index_wear(const MemcamIndex *ix,
                               double query_rate,
                               uint64_t *out_max_writes,
                               double *out_lifetime_s);

/**
 * A partition of `capacity` words of `key_bits` bits (a power of two in
 * 2..=1024; words above 64 bits are zero-extended).
 *
 * # Safety
 * `out` must be valid for one write.
 */
MemcamStatus memcam_cam_new(MemcamCamMode mode,
                            uint32_t key_bits,
                            size_t capacity,
                            MemcamCam **out);

/**
 * # Safety
 * `cam` must be null or a handle from `memcam_cam_new` not yet freed.
 */
void memcam_cam_free(MemcamCam *cam);

/**
 * Append a word. Bits set in `dont_care` match any key bit (TCAM only).
 * `*out_index` receives the entry index unless it is null.
 *
 * # Safety
 * `cam` must be a live handle not used concurrently; `out_index` null or
 * valid for one write.
 */
MemcamStatus memcam_cam_store(MemcamCam *cam,
                              uint64_t value,
                              uint64_t dont_care,
                              size_t *out_index);

/**
 * Search every stored word. `*out_len` receives the entry count; matches
 * are copied only if it fits in `cap`, otherwise `BufferTooSmall`.
 * `out_stats` may be null.
 *
 * # Safety
 * `cam` must be a live handle not used concurrently; `out` valid for `cap`
 * writes (null allowed when `cap` is 0); `out_len` valid for one write.
 */
MemcamStatus memcam_cam_search(MemcamCam *cam,
                               uint64_t key,
                               MemcamMatch *out,
                               size_t cap,
                               size_t *out_len,
                               MemcamStats *out_stats);

/**
 * Largest write count of any cell in the partition's array.
 *
 * # Safety
 * `cam` must be a live handle; `out` valid for one write.
 */
MemcamStatus memcam_cam_max_writes(const MemcamCam *cam, uint64_t *out);

/**
 * Internal search latency in ns for `key_bits`-bit words.
 *
 * # Safety
 * `out` must be valid for one write.
 */
MemcamStatus memcam_cam_latency_ns(MemcamCamMode mode, uint32_t key_bits, double *out);

/**
 * Search energy in fJ per stored bit.
 *
 * # Safety
 * `out` must be valid for one write.
 */
MemcamStatus memcam_cam_energy_fj_per_bit(MemcamCamMode mode, uint32_t key_bits, double *out);

/**
 * Modeled average search time (ns) and lifetime (years) of a structure.
 * `params_toml` holds model parameters in the CLI's `[model]` format
 * without the table header (null for defaults).
 *
 * # Safety
 * `params_toml` must be null or NUL-terminated; out-pointers valid for one
 * write each (`out_lifetime_years` may be null).
 */
MemcamStatus memcam_model_eval(const char *params_toml,
                               MemcamStructure structure,
                               double *out_avg_ns,
                               double *out_lifetime_years);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEMCAM_H */
