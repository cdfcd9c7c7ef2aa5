#ifndef OBSERVATORY_H
#define OBSERVATORY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ObsStatus {
  OBS_STATUS_OK = 0,
  OBS_STATUS_NULL_POINTER = 1,
  OBS_STATUS_INVALID_ARGUMENT = 2,
  OBS_STATUS_FORMAT = 3,
  OBS_STATUS_NOT_FOUND = 4,
  OBS_STATUS_BUFFER_TOO_SMALL = 5,
  OBS_STATUS_PANIC = 6,
} ObsStatus;

/**
 * Sorted IP blocklist.
 */
typedef struct ObsBlocklist ObsBlocklist;

/**
 * Bloom-filter blocklist.
 */
typedef struct ObsBloom ObsBloom;

/**
 * Connection gate over either blocklist format.
 */
typedef struct ObsGate ObsGate;

/**
 * Query-key table for exact common-prefix-length lookups.
 */
typedef struct ObsKeyTable ObsKeyTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *obs_version(void);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into this library on the same thread.
 */
const char *obs_last_error(void);

/**
 * SHA-256 of `data` into the 32 bytes at `out_key`.
 */
enum ObsStatus obs_kad_key(const uint8_t *data, size_t len, uint8_t *out_key);

/**
 * Leading bits shared by two 32-byte keys, 0..=256.
 */
enum ObsStatus obs_common_prefix_len(const uint8_t *a, const uint8_t *b, uint32_t *out_cpl);

/**
 * CIDv0 of `data` laid out as a UnixFS file DAG.
 */
enum ObsStatus obs_cid_of_bytes(const uint8_t *data,
                                size_t len,
                                char *buf,
                                size_t cap,
                                size_t *written);

/**
 * Content-sniffed MIME type of `data`, or "unknown".
 */
enum ObsStatus obs_sniff_mime(const uint8_t *data,
                              size_t len,
                              char *buf,
                              size_t cap,
                              size_t *written);

/**
 * Parses a serialized sorted blocklist.
 */
enum ObsStatus obs_blocklist_load(const uint8_t *data, size_t len, struct ObsBlocklist **out_list);

/**
 * Builds a blocklist from whitespace-separated IP addresses.
 */
enum ObsStatus obs_blocklist_build(const char *ips,
                                   int64_t created_at_unix,
                                   struct ObsBlocklist **out_list);

size_t obs_blocklist_len(const struct ObsBlocklist *list);

/**
 * Sets `*out_listed` to 1 when `ip` is listed, else 0.
 */
enum ObsStatus obs_blocklist_contains(const struct ObsBlocklist *list,
                                      const char *ip,
                                      uint8_t *out_listed);

/**
 * Serializes the list into `buf`; `*written` receives the required length
 * even when `cap` is too small.
 */
enum ObsStatus obs_blocklist_serialize(const struct ObsBlocklist *list,
                                       uint8_t *buf,
                                       size_t cap,
                                       size_t *written);

void obs_blocklist_free(struct ObsBlocklist *list);

/**
 * Parses a serialized Bloom-filter blocklist.
 */
enum ObsStatus obs_bloom_load(const uint8_t *data, size_t len, struct ObsBloom **out_bloom);

/**
 * Sets `*out_listed` to 1 when `ip` may be listed, 0 when it certainly is not.
 */
enum ObsStatus obs_bloom_contains(const struct ObsBloom *bloom,
                                  const char *ip,
                                  uint8_t *out_listed);

void obs_bloom_free(struct ObsBloom *bloom);

/**
 * Builds a gate from a serialized blocklist of either format, told apart by
 * its magic.
 */
enum ObsStatus obs_gate_load(const uint8_t *data, size_t len, struct ObsGate **out_gate);

/**
 * Sets `*out_allowed` to 1 when dialing or accepting `multiaddr` is allowed.
 */
enum ObsStatus obs_gate_check(const struct ObsGate *gate,
                              const char *multiaddr,
                              uint8_t *out_allowed);

uint64_t obs_gate_denied(const struct ObsGate *gate);

void obs_gate_free(struct ObsGate *gate);

/**
 * Builds a query-key table of `pool_size` candidates from `seed`.
 */
enum ObsStatus obs_key_table_build(uint64_t seed, size_t pool_size, struct ObsKeyTable **out_table);

/**
 * Deepest common prefix length every lookup is guaranteed to satisfy.
 */
uint32_t obs_key_table_max_cpl(const struct ObsKeyTable *table);

/**
 * Writes into the 32 bytes at `out_key` a preimage whose hash shares exactly
 * `cpl` leading bits with the 32-byte `target`.
 */
enum ObsStatus obs_key_table_find(const struct ObsKeyTable *table,
                                  const uint8_t *target,
                                  uint32_t cpl,
                                  uint8_t *out_key);

void obs_key_table_free(struct ObsKeyTable *table);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBSERVATORY_H */
