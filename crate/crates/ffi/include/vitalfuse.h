#ifndef VITALFUSE_H
#define VITALFUSE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VfStatus {
  VF_STATUS_OK = 0,
  VF_STATUS_NULL_POINTER = 1,
  VF_STATUS_INVALID_ARGUMENT = 2,
  VF_STATUS_CONFLICT = 3,
  VF_STATUS_PARSE = 4,
  VF_STATUS_IO = 5,
  VF_STATUS_INTERNAL = 6,
} VfStatus;

typedef enum VfBand {
  VF_BAND_LOWEST = 0,
  VF_BAND_LOW = 1,
  VF_BAND_NORMAL = 2,
  VF_BAND_MEDIUM = 3,
  VF_BAND_HIGH = 4,
  VF_BAND_HIGHEST = 5,
} VfBand;

typedef enum VfRisk {
  VF_RISK_LOW = 0,
  VF_RISK_MEDIUM = 1,
  VF_RISK_HIGH = 2,
  VF_RISK_HIGHEST = 3,
} VfRisk;

typedef enum VfKind {
  VF_KIND_HEART_RATE = 0,
  VF_KIND_RESPIRATORY_RATE = 1,
  VF_KIND_BP_SYSTOLIC = 2,
  VF_KIND_BP_DIASTOLIC = 3,
  VF_KIND_BODY_TEMPERATURE = 4,
  VF_KIND_BLOOD_PH = 5,
} VfKind;

// Parameter groups in rule-table column order.
typedef enum VfGroup {
  VF_GROUP_RESPIRATORY = 0,
  VF_GROUP_BLOOD_PH = 1,
  VF_GROUP_HEART = 2,
  VF_GROUP_BLOOD_PRESSURE = 3,
  VF_GROUP_TEMPERATURE = 4,
} VfGroup;

// Opaque streaming engine.
typedef struct VfEngine VfEngine;

// Opaque mass function.
typedef struct VfMass VfMass;

typedef struct VfClassification {
  enum VfRisk risk;
  // 0 for the rule table, 1 for evidence fusion.
  uint8_t fused;
  // 1-based rule-table row, 0 when fusion decided.
  uint32_t matched_row;
  // 1 when `support`, `plausibility` and `uncertainty` are set.
  uint8_t has_interval;
  double support;
  double plausibility;
  double uncertainty;
  // Largest pairwise conflict seen during fusion; 0 for table matches.
  double conflict;
} VfClassification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *vf_last_error(void);

// Library version as a static string.
const char *vf_version(void);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void vf_string_free(char *s);

// Default normal range of `kind` (a `VfKind`) for a patient of `age_years`.
//
// # Safety
// `lo` and `hi` must be valid for writes.
enum VfStatus vf_normal_range(uint32_t kind, uint32_t age_years, double *lo, double *hi);

// Band of a reading of `kind` (a `VfKind`) against the default ranges.
//
// # Safety
// `out` must be valid for writes.
enum VfStatus vf_band(uint32_t kind, double value, uint32_t age_years, enum VfBand *out);

// Classify five bands given in group order. `reliabilities` may be null
// for the defaults, otherwise it points at five values in (0, 1].
//
// # Safety
// `bands` must point at five readable `VfBand` values, `reliabilities` at
// five doubles or be null, and `out` must be valid for writes.
enum VfStatus vf_classify(const enum VfBand *bands,
                          const double *reliabilities,
                          struct VfClassification *out);

// Recommendation text for a `VfRisk` and a `VfGroup`. `VF_RISK_HIGHEST`
// shares the high-risk texts. The string is static; null for values out
// of range.
const char *vf_recommendation(uint32_t risk, uint32_t group);

// Parse a mass function from text such as
// `"Low,Medium,High | {Low}:0.6 {Low,Medium,High}:0.4"`.
//
// # Safety
// `text` must be a NUL-terminated string and `out` valid for writes.
enum VfStatus vf_mass_from_text(const char *text, struct VfMass **out);

// Dempster combination of `a` and `b`. `conflict` may be null.
//
// # Safety
// `a` and `b` must be live handles and `out` valid for writes.
enum VfStatus vf_mass_combine(const struct VfMass *a,
                              const struct VfMass *b,
                              struct VfMass **out,
                              double *conflict);

// Belief of the set whose bit `i` selects the `i`-th frame label.
//
// # Safety
// `m` must be a live handle and `out` valid for writes.
enum VfStatus vf_mass_belief(const struct VfMass *m, uint16_t set, double *out);

// Plausibility of the set whose bit `i` selects the `i`-th frame label.
//
// # Safety
// `m` must be a live handle and `out` valid for writes.
enum VfStatus vf_mass_plausibility(const struct VfMass *m, uint16_t set, double *out);

// Text form of `m`; free the result with [`vf_string_free`].
//
// # Safety
// `m` must be a live handle and `out` valid for writes.
enum VfStatus vf_mass_to_text(const struct VfMass *m, char **out);

// # Safety
// `m` must be null or a live handle; it is invalid afterwards.
void vf_mass_free(struct VfMass *m);

// Parse one wire line. `patient` may be null; otherwise it receives an
// owned copy of the patient id.
//
// # Safety
// `line` must be a NUL-terminated string; the other pointers must be valid
// for writes.
enum VfStatus vf_parse_line(const char *line,
                            enum VfKind *kind,
                            int64_t *ts_ms,
                            double *value,
                            uint64_t *seq,
                            char **patient);

// Create a streaming engine with default ranges and reliabilities.
//
// # Safety
// `out` must be valid for writes.
enum VfStatus vf_engine_new(double epoch_s, struct VfEngine **out);

// Set a patient's age before its first sample arrives.
//
// # Safety
// `engine` must be a live handle and `patient` a NUL-terminated string.
enum VfStatus vf_engine_set_age(struct VfEngine *engine, const char *patient, uint32_t age_years);

// Feed one wire line. A line that does not parse returns `Parse` and is
// counted; the engine stays usable.
//
// # Safety
// `engine` must be a live handle and `line` a NUL-terminated string.
enum VfStatus vf_engine_push_line(struct VfEngine *engine, const char *line);

// Close all open epochs. No lines are accepted afterwards.
//
// # Safety
// `engine` must be a live handle.
enum VfStatus vf_engine_finish(struct VfEngine *engine);

// Next pending event as a JSON object, or null in `out` when none is
// pending. Free the string with [`vf_string_free`].
//
// # Safety
// `engine` must be a live handle and `out` valid for writes.
enum VfStatus vf_engine_next_event(struct VfEngine *engine, char **out);

// # Safety
// `engine` must be null or a live handle; it is invalid afterwards.
void vf_engine_free(struct VfEngine *engine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VITALFUSE_H */
