//! C ABI over the voqa toolkit.
//!
//! Conventions: fallible calls return a [`VoqaStatus`]; on failure the
//! message is available from [`voqa_last_error`] on the same thread.
//! Strings returned through `char**` are owned by the caller and released
//! with [`voqa_string_free`]. Handles are released with their `_free`
//! function; passing NULL to any `_free` is a no-op.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use image::RgbImage;

use voqa::color::{wcag_contrast, ColorProvenance};
use voqa::composite::{BBox, CompositeArtifact, Position};
use voqa::manifest::{DatasetKind, QuestionType, SampleRecord};
use voqa::metrics::{edit_distance, qaa, NormPolicy};
use voqa::prompts::{build_ocr_assisted_prompt, build_prompt, PromptKind, PromptTarget};
use voqa::raster::Font;
use voqa::respfilter::{filter_response, FilterMode, FilterOutcome, Strategy};
use voqa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaStatus {
    Ok = 0,
    InvalidArgument = 1,
    Parse = 2,
    Io = 3,
    Render = 4,
    Endpoint = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaPosition {
    Top = 0,
    Bottom = 1,
    Left = 2,
    Right = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaFilterMode {
    Auto = 0,
    Json = 1,
    Qra = 2,
    Qa = 3,
    Verbatim = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaStrategy {
    JsonField = 0,
    AnswerPattern = 1,
    RoleSplit = 2,
    LastSentence = 3,
    Verbatim = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaDatasetKind {
    Vqav2 = 0,
    Gqa = 1,
    Pope = 2,
    Textvqa = 3,
    Sqa = 4,
    Custom = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaPromptKind {
    None = 0,
    Light = 1,
    ShortWorkflow = 2,
    LongWorkflow = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoqaColorProvenance {
    /// Not a watermark composite.
    NotApplicable = 0,
    Computed = 1,
    BlackFallback = 2,
    WhiteFallback = 3,
}

/// A rendered composite image with its metadata.
pub struct VoqaComposite(CompositeArtifact);

/// Result of answer extraction.
pub struct VoqaFilterOutcome(FilterOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', "\\0")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> VoqaStatus {
    match err {
        Error::Io { .. } => VoqaStatus::Io,
        Error::Parse { .. } | Error::Validation { .. } | Error::DuplicateId { .. } => VoqaStatus::Parse,
        Error::Unrenderable { .. } | Error::Font(_) | Error::Image(_) => VoqaStatus::Render,
        Error::Endpoint(_) | Error::AllSamplesFailed { .. } => VoqaStatus::Endpoint,
        _ => VoqaStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> VoqaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VoqaStatus::Ok,
        Ok(Err(e)) => {
            let status = status_of(&e);
            set_error(e.to_string());
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VoqaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::invalid(format!("{name} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Error::invalid(format!("{name} is not valid UTF-8")))
}

fn into_c_string(s: &str) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes replaced").into_raw()
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Error> {
    if out.is_null() {
        return Err(Error::invalid("output pointer is NULL"));
    }
    out.write(value);
    Ok(())
}

unsafe fn scene_arg(rgb: *const u8, width: u32, height: u32) -> Result<RgbImage, Error> {
    if rgb.is_null() {
        return Err(Error::invalid("pixel buffer is NULL"));
    }
    let len = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| Error::invalid("image dimensions overflow"))?;
    let data = std::slice::from_raw_parts(rgb, len).to_vec();
    RgbImage::from_raw(width, height, data).ok_or_else(|| Error::invalid("pixel buffer size mismatch"))
}

fn ad_hoc_record(question: &str) -> SampleRecord {
    SampleRecord {
        id: "ffi".into(),
        scene_path: "".into(),
        question: question.into(),
        answers: vec![String::new()],
        dataset_kind: DatasetKind::Custom,
        question_type: QuestionType::OpenEnded,
        choices: None,
        ocr_text: None,
        excluded: false,
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn voqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn voqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn voqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Watermarks `question` onto a packed RGB8 scene of `width * height * 3`
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn voqa_composite_watermark(
    rgb: *const u8,
    width: u32,
    height: u32,
    question: *const c_char,
    out: *mut *mut VoqaComposite,
) -> VoqaStatus {
    guard(|| {
        let scene = scene_arg(rgb, width, height)?;
        let record = ad_hoc_record(str_arg(question, "question")?);
        let artifact = voqa::watermark::compose_watermark(&scene, &record, Font::dejavu_sans_bold())?;
        put(out, Box::into_raw(Box::new(VoqaComposite(artifact))))
    })
}

/// Joins a 224x224 question tile to the scene at `position`, padding with
/// white or (when `resize`) scaling the smaller image.
#[no_mangle]
pub unsafe extern "C" fn voqa_composite_concat(
    rgb: *const u8,
    width: u32,
    height: u32,
    question: *const c_char,
    position: VoqaPosition,
    resize: bool,
    out: *mut *mut VoqaComposite,
) -> VoqaStatus {
    guard(|| {
        let scene = scene_arg(rgb, width, height)?;
        let record = ad_hoc_record(str_arg(question, "question")?);
        let position = match position {
            VoqaPosition::Top => Position::Top,
            VoqaPosition::Bottom => Position::Bottom,
            VoqaPosition::Left => Position::Left,
            VoqaPosition::Right => Position::Right,
        };
        let artifact =
            voqa::concat::compose_concat(&scene, &record, position, resize, Font::dejavu_sans_bold())?;
        put(out, Box::into_raw(Box::new(VoqaComposite(artifact))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn voqa_composite_free(c: *mut VoqaComposite) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

#[no_mangle]
pub unsafe extern "C" fn voqa_composite_width(c: *const VoqaComposite) -> u32 {
    c.as_ref().map_or(0, |c| c.0.pixels.width())
}

#[no_mangle]
pub unsafe extern "C" fn voqa_composite_height(c: *const VoqaComposite) -> u32 {
    c.as_ref().map_or(0, |c| c.0.pixels.height())
}

/// Packed RGB8 pixels owned by the handle; `len` receives the byte count.
#[no_mangle]
pub unsafe extern "C" fn voqa_composite_pixels(c: *const VoqaComposite, len: *mut usize) -> *const u8 {
    match c.as_ref() {
        Some(c) => {
            let raw = c.0.pixels.as_raw();
            if !len.is_null() {
                len.write(raw.len());
            }
            raw.as_ptr()
        }
        None => ptr::null(),
    }
}

/// Question box as `[x0, y0, x1, y1]`, half-open.
#[no_mangle]
pub unsafe extern "C" fn voqa_composite_bbox(c: *const VoqaComposite, out: *mut u32) -> VoqaStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| Error::invalid("composite is NULL"))?;
        if out.is_null() {
            return Err(Error::invalid("output pointer is NULL"));
        }
        let b: [u32; 4] = c.0.bbox().into();
        ptr::copy_nonoverlapping(b.as_ptr(), out, 4);
        Ok(())
    })
}

/// Watermark text color; `rgb` receives 3 bytes. Returns NotApplicable for
/// concatenation composites.
#[no_mangle]
pub unsafe extern "C" fn voqa_composite_color(c: *const VoqaComposite, rgb: *mut u8) -> VoqaColorProvenance {
    let Some(c) = c.as_ref() else {
        return VoqaColorProvenance::NotApplicable;
    };
    match &c.0.color {
        None => VoqaColorProvenance::NotApplicable,
        Some(color) => {
            if !rgb.is_null() {
                ptr::copy_nonoverlapping(color.rgb.as_ptr(), rgb, 3);
            }
            match color.provenance {
                ColorProvenance::Computed => VoqaColorProvenance::Computed,
                ColorProvenance::BlackFallback => VoqaColorProvenance::BlackFallback,
                ColorProvenance::WhiteFallback => VoqaColorProvenance::WhiteFallback,
            }
        }
    }
}

/// Sidecar metadata line as JSON.
#[no_mangle]
pub unsafe extern "C" fn voqa_composite_info_json(
    c: *const VoqaComposite,
    out: *mut *mut c_char,
) -> VoqaStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| Error::invalid("composite is NULL"))?;
        let json = serde_json::to_string(&c.0.info).expect("info serializes");
        put(out, into_c_string(&json))
    })
}

#[no_mangle]
pub unsafe extern "C" fn voqa_composite_save_png(c: *const VoqaComposite, path: *const c_char) -> VoqaStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| Error::invalid("composite is NULL"))?;
        c.0.save_png(Path::new(str_arg(path, "path")?))
    })
}

/// Extracts the answer from a raw model response. `role_token` may be NULL
/// outside `Qra` mode.
#[no_mangle]
pub unsafe extern "C" fn voqa_filter_response(
    raw: *const c_char,
    mode: VoqaFilterMode,
    role_token: *const c_char,
    dataset_kind: VoqaDatasetKind,
    out: *mut *mut VoqaFilterOutcome,
) -> VoqaStatus {
    guard(|| {
        let raw = str_arg(raw, "raw")?;
        let role = if role_token.is_null() { "" } else { str_arg(role_token, "role_token")? };
        let mode = match mode {
            VoqaFilterMode::Auto => FilterMode::Auto,
            VoqaFilterMode::Json => FilterMode::Json,
            VoqaFilterMode::Qra => FilterMode::Qra,
            VoqaFilterMode::Qa => FilterMode::Qa,
            VoqaFilterMode::Verbatim => FilterMode::Verbatim,
        };
        let kind = match dataset_kind {
            VoqaDatasetKind::Vqav2 => DatasetKind::Vqav2,
            VoqaDatasetKind::Gqa => DatasetKind::Gqa,
            VoqaDatasetKind::Pope => DatasetKind::Pope,
            VoqaDatasetKind::Textvqa => DatasetKind::Textvqa,
            VoqaDatasetKind::Sqa => DatasetKind::Sqa,
            VoqaDatasetKind::Custom => DatasetKind::Custom,
        };
        let outcome = filter_response(raw, mode, role, kind);
        put(out, Box::into_raw(Box::new(VoqaFilterOutcome(outcome))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn voqa_filter_outcome_free(o: *mut VoqaFilterOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Extracted answer; caller frees. NULL for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn voqa_filter_outcome_answer(o: *const VoqaFilterOutcome) -> *mut c_char {
    o.as_ref().map_or(ptr::null_mut(), |o| into_c_string(&o.0.answer))
}

/// Detected question, or NULL when none was found; caller frees.
#[no_mangle]
pub unsafe extern "C" fn voqa_filter_outcome_question(o: *const VoqaFilterOutcome) -> *mut c_char {
    o.as_ref().and_then(|o| o.0.detected_question.as_deref()).map_or(ptr::null_mut(), into_c_string)
}

#[no_mangle]
pub unsafe extern "C" fn voqa_filter_outcome_strategy(o: *const VoqaFilterOutcome) -> VoqaStrategy {
    match o.as_ref().map(|o| o.0.strategy) {
        Some(Strategy::JsonField) => VoqaStrategy::JsonField,
        Some(Strategy::AnswerPattern) => VoqaStrategy::AnswerPattern,
        Some(Strategy::RoleSplit) => VoqaStrategy::RoleSplit,
        Some(Strategy::LastSentence) => VoqaStrategy::LastSentence,
        Some(Strategy::Verbatim) | None => VoqaStrategy::Verbatim,
    }
}

/// Whether the requested mode fell back to another strategy.
#[no_mangle]
pub unsafe extern "C" fn voqa_filter_outcome_flagged(o: *const VoqaFilterOutcome) -> bool {
    o.as_ref().is_some_and(|o| o.0.flagged)
}

/// Levenshtein distance over Unicode scalar values.
#[no_mangle]
pub unsafe extern "C" fn voqa_edit_distance(
    a: *const c_char,
    b: *const c_char,
    out: *mut usize,
) -> VoqaStatus {
    guard(|| {
        let d = edit_distance(str_arg(a, "a")?, str_arg(b, "b")?);
        put(out, d)
    })
}

/// Question alignment accuracy of one predicted question against the
/// reference, with case folding and whitespace collapsing.
#[no_mangle]
pub unsafe extern "C" fn voqa_qaa(
    predicted: *const c_char,
    reference: *const c_char,
    out: *mut f64,
) -> VoqaStatus {
    guard(|| {
        let r = qaa(
            &[str_arg(predicted, "predicted")?],
            str_arg(reference, "reference")?,
            NormPolicy::default(),
        )?;
        put(out, r.qaa)
    })
}

/// WCAG 2.x contrast ratio between two sRGB colors given as 3-byte arrays.
#[no_mangle]
pub unsafe extern "C" fn voqa_wcag_contrast(a: *const u8, b: *const u8) -> f64 {
    if a.is_null() || b.is_null() {
        return f64::NAN;
    }
    let a = [*a, *a.add(1), *a.add(2)];
    let b = [*b, *b.add(1), *b.add(2)];
    wcag_contrast(a, b)
}

/// Zero-shot prompt text. `bbox` (4 values) may be NULL for `None` and
/// `Light`; workflow kinds require it.
#[no_mangle]
pub unsafe extern "C" fn voqa_build_prompt(
    kind: VoqaPromptKind,
    bbox: *const u32,
    width: u32,
    height: u32,
    out: *mut *mut c_char,
) -> VoqaStatus {
    guard(|| {
        let kind = match kind {
            VoqaPromptKind::None => PromptKind::None,
            VoqaPromptKind::Light => PromptKind::Light,
            VoqaPromptKind::ShortWorkflow => PromptKind::ShortWorkflow,
            VoqaPromptKind::LongWorkflow => PromptKind::LongWorkflow,
        };
        let bbox = (!bbox.is_null()).then(|| BBox::new(*bbox, *bbox.add(1), *bbox.add(2), *bbox.add(3)));
        let text = build_prompt(kind, &PromptTarget { bbox, width, height })?;
        put(out, into_c_string(&text))
    })
}

/// OCR-assisted prompt wrapping `ocr_text`.
#[no_mangle]
pub unsafe extern "C" fn voqa_build_ocr_prompt(ocr_text: *const c_char, out: *mut *mut c_char) -> VoqaStatus {
    guard(|| {
        let text = build_ocr_assisted_prompt(str_arg(ocr_text, "ocr_text")?)?;
        put(out, into_c_string(&text))
    })
}

/// One SFT example as a JSON line. `record_json` is a manifest record;
/// `composite_path` may be NULL for the `vqa` strategy.
#[no_mangle]
pub unsafe extern "C" fn voqa_sft_example_json(
    record_json: *const c_char,
    composite_path: *const c_char,
    strategy: *const c_char,
    role_token: *const c_char,
    out: *mut *mut c_char,
) -> VoqaStatus {
    guard(|| {
        let records = voqa::manifest::parse_manifest(str_arg(record_json, "record_json")?)?;
        let record = records.first().ok_or_else(|| Error::invalid("record_json holds no record"))?;
        let composite =
            if composite_path.is_null() { None } else { Some(str_arg(composite_path, "composite_path")?) };
        let strategy = str_arg(strategy, "strategy")?.parse()?;
        let role = if role_token.is_null() { "" } else { str_arg(role_token, "role_token")? };
        let ex = voqa::sft::build_sft_example(record, composite, strategy, role)?;
        put(out, into_c_string(&serde_json::to_string(&ex).expect("example serializes")))
    })
}
