//! Zero-shot prompt texts, OCR-assisted wrapping and few-shot assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::composite::{BBox, RenderInfo};
use crate::error::{Error, Result};
use crate::manifest::DatasetKind;
use crate::text::stable_hash;

const LIGHT: &str = include_str!("../assets/prompts/light.txt");
const SHORT_WORKFLOW: &str = include_str!("../assets/prompts/short_workflow.txt");
const LONG_WORKFLOW: &str = include_str!("../assets/prompts/long_workflow.txt");
const FEW_SHOT_HEADER: &str = include_str!("../assets/prompts/few_shot_header.txt");
const OCR_ASSISTED: &str = include_str!("../assets/prompts/ocr_assisted.txt");

/// Placeholders substituted into the workflow templates.
pub const PLACEHOLDERS: [&str; 5] =
    ["<bbox>", "<top-left-location>", "<bottom-right-location>", "<picture-width>", "<picture-height>"];

pub const FEW_SHOT_K: [usize; 4] = [1, 2, 4, 8];
pub const DEFAULT_POOL_SIZE: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    #[default]
    None,
    Light,
    ShortWorkflow,
    LongWorkflow,
    /// OCR text supplied as auxiliary input; see [`build_ocr_assisted_prompt`].
    OcrAssisted,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::None => "none",
            PromptKind::Light => "light",
            PromptKind::ShortWorkflow => "short_workflow",
            PromptKind::LongWorkflow => "long_workflow",
            PromptKind::OcrAssisted => "ocr_assisted",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(PromptKind::None),
            "light" => Ok(PromptKind::Light),
            "short" | "short_workflow" => Ok(PromptKind::ShortWorkflow),
            "long" | "long_workflow" => Ok(PromptKind::LongWorkflow),
            "ocr" | "ocr_assisted" => Ok(PromptKind::OcrAssisted),
            _ => Err(Error::invalid(format!("unknown prompt kind {s:?}"))),
        }
    }
}

/// What a prompt needs to know about the composite it accompanies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTarget {
    pub bbox: Option<BBox>,
    pub width: u32,
    pub height: u32,
}

impl From<&RenderInfo> for PromptTarget {
    fn from(info: &RenderInfo) -> Self {
        PromptTarget { bbox: Some(info.bbox), width: info.width, height: info.height }
    }
}

fn asset(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}

/// The light prompt variants in their canonical order; index 0 is the
/// default.
pub fn light_variants() -> Vec<&'static str> {
    LIGHT.lines().filter(|l| !l.is_empty()).collect()
}

pub fn light_prompt(index: usize) -> Result<&'static str> {
    let variants = light_variants();
    variants.get(index).copied().ok_or_else(|| {
        Error::invalid(format!("light prompt index {index} out of range (0..{})", variants.len()))
    })
}

/// Unsubstituted template text, as shipped.
pub fn template(kind: PromptKind) -> &'static str {
    match kind {
        PromptKind::None => "",
        PromptKind::Light => light_variants()[0],
        PromptKind::ShortWorkflow => asset(SHORT_WORKFLOW),
        PromptKind::LongWorkflow => asset(LONG_WORKFLOW),
        PromptKind::OcrAssisted => asset(OCR_ASSISTED),
    }
}

pub fn substitute_location(template: &str, bbox: BBox, width: u32, height: u32) -> String {
    let values = [
        format!("[{},{},{},{}]", bbox.x0, bbox.y0, bbox.x1, bbox.y1),
        format!("({},{})", bbox.x0, bbox.y0),
        format!("({},{})", bbox.x1, bbox.y1),
        width.to_string(),
        height.to_string(),
    ];
    PLACEHOLDERS.iter().zip(&values).fold(template.to_owned(), |acc, (p, v)| acc.replace(p, v))
}

/// Builds the zero-shot prompt for `kind`. Workflow prompts need a bbox.
/// `OcrAssisted` needs OCR text and is rejected here.
pub fn build_prompt(kind: PromptKind, target: &PromptTarget) -> Result<String> {
    match kind {
        PromptKind::None | PromptKind::Light => Ok(template(kind).to_owned()),
        PromptKind::ShortWorkflow | PromptKind::LongWorkflow => {
            let bbox = target
                .bbox
                .ok_or_else(|| Error::invalid(format!("{kind} prompt requires a question bounding box")))?;
            Ok(substitute_location(template(kind), bbox, target.width, target.height))
        }
        PromptKind::OcrAssisted => {
            Err(Error::invalid("ocr_assisted prompts are built from OCR text; use build_ocr_assisted_prompt"))
        }
    }
}

/// Wraps OCR output as auxiliary text. Independent of the question location.
pub fn build_ocr_assisted_prompt(ocr_text: &str) -> Result<String> {
    let ocr_text = ocr_text.trim();
    if ocr_text.is_empty() {
        return Err(Error::invalid("OCR text is empty"));
    }
    Ok(template(PromptKind::OcrAssisted).replace("<ocr-text>", ocr_text))
}

/// One demonstration: a composite image with its ground-truth question and
/// answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub id: String,
    pub image: String,
    pub question: String,
    pub answer: String,
    #[serde(default, rename = "dataset", skip_serializing_if = "Option::is_none")]
    pub dataset_kind: Option<DatasetKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPrompt {
    pub text: String,
    /// Image slots in order: the k demonstrations, then the target.
    pub images: Vec<String>,
    pub demo_ids: Vec<String>,
}

fn demo_output(question: &str, answer: &str) -> String {
    let q = serde_json::to_string(question).expect("string serializes");
    let a = serde_json::to_string(answer).expect("string serializes");
    format!("{{\"The question in the image\": {q}, \"Answer\": {a}}}")
}

/// Picks `k` demonstrations for `target_id` and lays out the few-shot
/// prompt. The selection depends only on `(pool, k, seed, target_id)`.
pub fn assemble_few_shot(
    pool: &[Demo],
    k: usize,
    seed: u64,
    target_id: &str,
    target_image: &str,
) -> Result<FewShotPrompt> {
    if !FEW_SHOT_K.contains(&k) {
        return Err(Error::invalid(format!("k must be one of {FEW_SHOT_K:?}, got {k}")));
    }
    if pool.len() < k {
        return Err(Error::invalid(format!("demonstration pool has {} entries, need {k}", pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stable_hash(target_id));
    let picked: Vec<&Demo> = index::sample(&mut rng, pool.len(), k).into_iter().map(|i| &pool[i]).collect();

    let mut text = asset(FEW_SHOT_HEADER).to_owned();
    text.push('\n');
    for (i, demo) in picked.iter().enumerate() {
        text.push_str(&format!(
            "\nExample {}:\nInput: <image>\nOutput: {}\n",
            i + 1,
            demo_output(&demo.question, &demo.answer)
        ));
    }
    text.push_str("\nNow answer the next one:\nInput: <image>\nOutput:");

    let mut images: Vec<String> = picked.iter().map(|d| d.image.clone()).collect();
    images.push(target_image.to_owned());
    Ok(FewShotPrompt { text, images, demo_ids: picked.iter().map(|d| d.id.clone()).collect() })
}

/// Seeded sample of `size` demonstrations from `candidates`, stratified so
/// each dataset kind keeps its share (largest-remainder rounding). Unlabeled
/// candidates form their own stratum. Output keeps candidate order.
pub fn build_demo_pool(candidates: &[Demo], size: usize, seed: u64) -> Vec<Demo> {
    if size >= candidates.len() {
        return candidates.to_vec();
    }
    let mut strata: BTreeMap<Option<&'static str>, Vec<usize>> = BTreeMap::new();
    for (i, d) in candidates.iter().enumerate() {
        strata.entry(d.dataset_kind.map(DatasetKind::as_str)).or_default().push(i);
    }
    let total = candidates.len();
    let mut quotas: Vec<(usize, usize, Option<&'static str>)> = strata
        .iter()
        .map(|(key, members)| {
            let exact = members.len() * size;
            (exact / total, exact % total, *key)
        })
        .collect();
    let mut remaining = size - quotas.iter().map(|q| q.0).sum::<usize>();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].1.cmp(&quotas[a].1).then(a.cmp(&b)));
    for i in order {
        if remaining == 0 {
            break;
        }
        quotas[i].0 += 1;
        remaining -= 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    for (quota, _, key) in quotas {
        let members = &strata[&key];
        chosen.extend(index::sample(&mut rng, members.len(), quota).into_iter().map(|j| members[j]));
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| candidates[i].clone()).collect()
}
