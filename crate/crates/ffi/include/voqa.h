#ifndef VOQA_H
#define VOQA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VoqaStatus {
  VOQA_STATUS_OK = 0,
  VOQA_STATUS_INVALID_ARGUMENT = 1,
  VOQA_STATUS_PARSE = 2,
  VOQA_STATUS_IO = 3,
  VOQA_STATUS_RENDER = 4,
  VOQA_STATUS_ENDPOINT = 5,
  VOQA_STATUS_PANIC = 6,
} VoqaStatus;

typedef enum VoqaPosition {
  VOQA_POSITION_TOP = 0,
  VOQA_POSITION_BOTTOM = 1,
  VOQA_POSITION_LEFT = 2,
  VOQA_POSITION_RIGHT = 3,
} VoqaPosition;

typedef enum VoqaColorProvenance {
  // Not a watermark composite.
  VOQA_COLOR_PROVENANCE_NOT_APPLICABLE = 0,
  VOQA_COLOR_PROVENANCE_COMPUTED = 1,
  VOQA_COLOR_PROVENANCE_BLACK_FALLBACK = 2,
  VOQA_COLOR_PROVENANCE_WHITE_FALLBACK = 3,
} VoqaColorProvenance;

typedef enum VoqaFilterMode {
  VOQA_FILTER_MODE_AUTO = 0,
  VOQA_FILTER_MODE_JSON = 1,
  VOQA_FILTER_MODE_QRA = 2,
  VOQA_FILTER_MODE_QA = 3,
  VOQA_FILTER_MODE_VERBATIM = 4,
} VoqaFilterMode;

typedef enum VoqaDatasetKind {
  VOQA_DATASET_KIND_VQAV2 = 0,
  VOQA_DATASET_KIND_GQA = 1,
  VOQA_DATASET_KIND_POPE = 2,
  VOQA_DATASET_KIND_TEXTVQA = 3,
  VOQA_DATASET_KIND_SQA = 4,
  VOQA_DATASET_KIND_CUSTOM = 5,
} VoqaDatasetKind;

typedef enum VoqaStrategy {
  VOQA_STRATEGY_JSON_FIELD = 0,
  VOQA_STRATEGY_ANSWER_PATTERN = 1,
  VOQA_STRATEGY_ROLE_SPLIT = 2,
  VOQA_STRATEGY_LAST_SENTENCE = 3,
  VOQA_STRATEGY_VERBATIM = 4,
} VoqaStrategy;

typedef enum VoqaPromptKind {
  VOQA_PROMPT_KIND_NONE = 0,
  VOQA_PROMPT_KIND_LIGHT = 1,
  VOQA_PROMPT_KIND_SHORT_WORKFLOW = 2,
  VOQA_PROMPT_KIND_LONG_WORKFLOW = 3,
} VoqaPromptKind;

// A rendered composite image with its metadata.
typedef struct VoqaComposite VoqaComposite;

// Result of answer extraction.
typedef struct VoqaFilterOutcome VoqaFilterOutcome;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread; do not free.
const char *voqa_last_error(void);

// Library version as a static NUL-terminated string.
const char *voqa_version(void);

void voqa_string_free(char *s);

// Watermarks `question` onto a packed RGB8 scene of `width * height * 3`
// bytes.
enum VoqaStatus voqa_composite_watermark(const uint8_t *rgb,
                                         uint32_t width,
                                         uint32_t height,
                                         const char *question,
                                         struct VoqaComposite **out);

// Joins a 224x224 question tile to the scene at `position`, padding with
// white or (when `resize`) scaling the smaller image.
enum VoqaStatus voqa_composite_concat(const uint8_t *rgb,
                                      uint32_t width,
                                      uint32_t height,
                                      const char *question,
                                      enum VoqaPosition position,
                                      bool resize,
                                      struct VoqaComposite **out);

void voqa_composite_free(struct VoqaComposite *c);

uint32_t voqa_composite_width(const struct VoqaComposite *c);

uint32_t voqa_composite_height(const struct VoqaComposite *c);

// Packed RGB8 pixels owned by the handle; `len` receives the byte count.
const uint8_t *voqa_composite_pixels(const struct VoqaComposite *c, size_t *len);

// Question box as `[x0, y0, x1, y1]`, half-open.
enum VoqaStatus voqa_composite_bbox(const struct VoqaComposite *c, uint32_t *out);

// Watermark text color; `rgb` receives 3 bytes. Returns NotApplicable for
// concatenation composites.
enum VoqaColorProvenance voqa_composite_color(const struct VoqaComposite *c, uint8_t *rgb);

// Sidecar metadata line as JSON.
enum VoqaStatus voqa_composite_info_json(const struct VoqaComposite *c, char **out);

enum VoqaStatus voqa_composite_save_png(const struct VoqaComposite *c, const char *path);

// Extracts the answer from a raw model response. `role_token` may be NULL
// outside `Qra` mode.
enum VoqaStatus voqa_filter_response(const char *raw,
                                     enum VoqaFilterMode mode,
                                     const char *role_token,
                                     enum VoqaDatasetKind dataset_kind,
                                     struct VoqaFilterOutcome **out);

void voqa_filter_outcome_free(struct VoqaFilterOutcome *o);

// Extracted answer; caller frees. NULL for a NULL handle.
char *voqa_filter_outcome_answer(const struct VoqaFilterOutcome *o);

// Detected question, or NULL when none was found; caller frees.
char *voqa_filter_outcome_question(const struct VoqaFilterOutcome *o);

enum VoqaStrategy voqa_filter_outcome_strategy(const struct VoqaFilterOutcome *o);

// Whether the requested mode fell back to another strategy.
bool voqa_filter_outcome_flagged(const struct VoqaFilterOutcome *o);

// Levenshtein distance over Unicode scalar values.
enum VoqaStatus voqa_edit_distance(const char *a, const char *b, size_t *out);

// Question alignment accuracy of one predicted question against the
// reference, with case folding and whitespace collapsing.
enum VoqaStatus voqa_qaa(const char *predicted, const char *reference, double *out);

// WCAG 2.x contrast ratio between two sRGB colors given as 3-byte arrays.
double voqa_wcag_contrast(const uint8_t *a, const uint8_t *b);

// Zero-shot prompt text. `bbox` (4 values) may be NULL for `None` and
// `Light`; workflow kinds require it.
enum VoqaStatus voqa_build_prompt(enum VoqaPromptKind kind,
                                  const uint32_t *bbox,
                                  uint32_t width,
                                  uint32_t height,
                                  char **out);

// OCR-assisted prompt wrapping `ocr_text`.
enum VoqaStatus voqa_build_ocr_prompt(const char *ocr_text, char **out);

// One SFT example as a JSON line. `record_json` is a manifest record;
// `composite_path` may be NULL for the `vqa` strategy.
enum VoqaStatus voqa_sft_example_json(const char *record_json,
                                      const char *composite_path,
                                      const char *strategy,
                                      const char *role_token,
                                      char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOQA_H */
