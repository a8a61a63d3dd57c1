//! Fine-tuning sequence construction: `(input, target)` pairs for each
//! supervision strategy, parameterized by an opaque role token.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::DatasetKind;
use crate::manifest::SampleRecord;
use crate::respfilter::{filter_response, FilterMode};

pub const ROLE_TOKENS: [&str; 4] = ["ASSISTANT:", "\nassistant\n", "HELPER:", "CAT:"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SftStrategy {
    /// Scene image with the question as text.
    Vqa,
    /// Composite image, answer-only target.
    Baseline,
    Qa,
    Qra,
    RQra,
    QaOnly,
    Rqa,
    Rqra,
}

impl SftStrategy {
    pub const ALL: [SftStrategy; 8] = [
        SftStrategy::Vqa,
        SftStrategy::Baseline,
        SftStrategy::Qa,
        SftStrategy::Qra,
        SftStrategy::RQra,
        SftStrategy::QaOnly,
        SftStrategy::Rqa,
        SftStrategy::Rqra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SftStrategy::Vqa => "vqa",
            SftStrategy::Baseline => "baseline",
            SftStrategy::Qa => "qa",
            SftStrategy::Qra => "qra",
            SftStrategy::RQra => "r_qra",
            SftStrategy::QaOnly => "qa_only",
            SftStrategy::Rqa => "rqa",
            SftStrategy::Rqra => "rqra",
        }
    }

    /// Whether the strategy trains on the composite rather than the scene.
    pub fn uses_composite(self) -> bool {
        self != SftStrategy::Vqa
    }

    pub fn uses_role_token(self) -> bool {
        self != SftStrategy::QaOnly
    }

    /// Filter mode that recovers the answer from a verbatim target.
    pub fn filter_mode(self) -> FilterMode {
        match self {
            SftStrategy::Qra | SftStrategy::RQra | SftStrategy::Rqra => FilterMode::Qra,
            SftStrategy::Qa | SftStrategy::QaOnly | SftStrategy::Rqa => FilterMode::Qa,
            SftStrategy::Vqa | SftStrategy::Baseline => FilterMode::Verbatim,
        }
    }
}

impl fmt::Display for SftStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SftStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        SftStrategy::ALL
            .into_iter()
            .find(|st| st.as_str() == key)
            .ok_or_else(|| Error::invalid(format!("unknown SFT strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub id: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    #[serde(rename = "input")]
    pub input_text: String,
    #[serde(rename = "target")]
    pub target_text: String,
    pub strategy: SftStrategy,
    pub role_token: String,
    /// Supervising answer, kept for round-trip checks.
    #[serde(skip)]
    pub answer: String,
}

fn join(parts: &[&str]) -> String {
    parts.join(" ")
}

/// Builds one training pair. `composite` is the composite image path and is
/// required by every strategy except `vqa`, which uses the scene image.
pub fn build_sft_example(
    record: &SampleRecord,
    composite: Option<&str>,
    strategy: SftStrategy,
    role_token: &str,
) -> Result<SftExample> {
    let image_ref = if strategy.uses_composite() {
        composite
            .ok_or_else(|| {
                Error::invalid(format!("strategy {strategy} needs a composite image for {:?}", record.id))
            })?
            .to_owned()
    } else {
        record.scene_path.to_string_lossy().into_owned()
    };
    if strategy.uses_role_token() && role_token.is_empty() {
        return Err(Error::invalid(format!("strategy {strategy} needs a non-empty role token")));
    }
    let answer = record.answers.first().map(|a| a.trim()).unwrap_or_default();
    if answer.is_empty() {
        return Err(Error::invalid(format!("record {:?} has no answer to supervise", record.id)));
    }
    let (q, a, r) = (record.question.trim(), answer, role_token);
    let (input_text, target_text) = match strategy {
        SftStrategy::Vqa => (join(&[q, r]), a.to_owned()),
        SftStrategy::Baseline => (r.to_owned(), a.to_owned()),
        SftStrategy::Qa => (r.to_owned(), join(&[q, a])),
        SftStrategy::Qra => (String::new(), join(&[q, r, a])),
        SftStrategy::RQra => (r.to_owned(), join(&[q, r, a])),
        SftStrategy::QaOnly => (String::new(), join(&[q, a])),
        SftStrategy::Rqa => (String::new(), join(&[r, q, a])),
        SftStrategy::Rqra => (String::new(), join(&[r, q, r, a])),
    };
    Ok(SftExample {
        id: record.id.clone(),
        image_ref,
        input_text,
        target_text,
        strategy,
        role_token: role_token.to_owned(),
        answer: a.to_owned(),
    })
}

/// Whether filtering `target_text` in the strategy's mode gives back the
/// supervising answer.
pub fn round_trip_check(example: &SftExample) -> bool {
    let outcome = filter_response(
        &example.target_text,
        example.strategy.filter_mode(),
        &example.role_token,
        DatasetKind::Custom,
    );
    !outcome.flagged && outcome.answer == example.answer
}

pub fn write_sft_jsonl<W: Write>(examples: &[SftExample], mut out: W) -> std::io::Result<()> {
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
