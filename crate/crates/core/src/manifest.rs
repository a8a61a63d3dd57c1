//! Corpus data model and JSONL manifest handling.
//!
//! A manifest line looks like
//!
//! ```json
//! {"id":"q1","image":"scenes/1.jpg","question":"What color is the hat?",
//!  "answers":["red"],"dataset":"gqa","type":"open_ended"}
//! ```
//!
//! with optional `"choices": [{"label":"A","text":"..."}]` for
//! multiple-choice records and `"ocr"` for precomputed OCR text. Relative
//! image paths are resolved by callers against the manifest's directory.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{collapse_whitespace, normalize_answer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Vqav2,
    Gqa,
    Pope,
    Textvqa,
    Sqa,
    Custom,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 6] = [
        DatasetKind::Vqav2,
        DatasetKind::Gqa,
        DatasetKind::Pope,
        DatasetKind::Textvqa,
        DatasetKind::Sqa,
        DatasetKind::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Vqav2 => "vqav2",
            DatasetKind::Gqa => "gqa",
            DatasetKind::Pope => "pope",
            DatasetKind::Textvqa => "textvqa",
            DatasetKind::Sqa => "sqa",
            DatasetKind::Custom => "custom",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown dataset kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    OpenEnded,
    Binary,
    MultipleChoice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

/// One (scene, question, answers) unit flowing through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    #[serde(rename = "image")]
    pub scene_path: PathBuf,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(rename = "dataset")]
    pub dataset_kind: DatasetKind,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<Choice>>,
    #[serde(rename = "ocr", default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    /// Set by [`prepare_question`] when the record must not be rendered.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub excluded: bool,
}

impl SampleRecord {
    /// Checks the record invariants, returning the offending field.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.id.trim().is_empty() {
            return Err(("id", "must be non-empty".into()));
        }
        if self.question.trim().is_empty() {
            return Err(("question", "must be non-empty".into()));
        }
        if self.answers.is_empty() {
            return Err(("answers", "at least one answer is required".into()));
        }
        match (&self.question_type, &self.choices) {
            (QuestionType::MultipleChoice, None) => {
                return Err(("choices", "multiple_choice records need choices".into()))
            }
            (QuestionType::MultipleChoice, Some(choices)) => validate_choices(choices)?,
            (_, Some(_)) => return Err(("choices", "only multiple_choice records may carry choices".into())),
            (_, None) => {}
        }
        if self.question_type == QuestionType::Binary {
            if let Some(bad) =
                self.answers.iter().find(|a| !matches!(normalize_answer(a).as_str(), "yes" | "no"))
            {
                return Err(("answers", format!("binary answer {bad:?} is not yes/no")));
            }
        }
        Ok(())
    }

    fn validated(self, line: Option<usize>) -> Result<Self> {
        match self.validate() {
            Ok(()) => Ok(self),
            Err((field, reason)) => Err(Error::Validation { line, id: self.id, field, reason }),
        }
    }
}

fn validate_choices(choices: &[Choice]) -> std::result::Result<(), (&'static str, String)> {
    if !(2..=5).contains(&choices.len()) {
        return Err(("choices", format!("expected 2-5 choices, got {}", choices.len())));
    }
    let mut seen = [false; 5];
    for c in choices {
        let idx = match c.label.as_str() {
            "A" => 0,
            "B" => 1,
            "C" => 2,
            "D" => 3,
            "E" => 4,
            other => return Err(("choices", format!("label {other:?} is not one of A-E"))),
        };
        if std::mem::replace(&mut seen[idx], true) {
            return Err(("choices", format!("duplicate label {:?}", c.label)));
        }
    }
    Ok(())
}

/// A multi-turn conversation over one scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    #[serde(rename = "image")]
    pub scene_path: PathBuf,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub q: String,
    pub a: String,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses manifest text. Line numbers in errors are 1-based.
pub fn parse_manifest(text: &str) -> Result<Vec<SampleRecord>> {
    let lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_owned()))
        .collect();
    parse_manifest_lines(lines)
}

fn parse_manifest_lines(lines: Vec<(usize, String)>) -> Result<Vec<SampleRecord>> {
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut records = Vec::with_capacity(lines.len());
    for (line, raw) in lines {
        let record: SampleRecord =
            serde_json::from_str(&raw).map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let record = record.validated(Some(line))?;
        if let Some(&first_line) = first_seen.get(&record.id) {
            return Err(Error::DuplicateId { line, first_line, id: record.id });
        }
        first_seen.insert(record.id.clone(), line);
        records.push(record);
    }
    Ok(records)
}

/// Loads and validates a JSONL manifest, preserving file order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    parse_manifest_lines(read_lines(path.as_ref())?)
}

pub fn write_manifest<W: Write>(records: &[SampleRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_dialogues(path: impl AsRef<Path>) -> Result<Vec<Dialogue>> {
    read_lines(path.as_ref())?
        .into_iter()
        .map(|(line, raw)| {
            serde_json::from_str(&raw).map_err(|e| Error::Parse { line, message: e.to_string() })
        })
        .collect()
}

/// Flattens dialogues into one open-ended record per turn, with ids of the
/// form `<dialogue id>#<turn index>`.
pub fn split_dialogues(dialogues: &[Dialogue]) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::with_capacity(dialogues.iter().map(|d| d.turns.len()).sum());
    for d in dialogues {
        if d.turns.is_empty() {
            return Err(Error::Validation {
                line: None,
                id: d.id.clone(),
                field: "turns",
                reason: "dialogue has no turns".into(),
            });
        }
        for (i, turn) in d.turns.iter().enumerate() {
            if turn.a.trim().is_empty() {
                return Err(Error::Validation {
                    line: None,
                    id: d.id.clone(),
                    field: "turns",
                    reason: format!("turn {i} has an empty answer"),
                });
            }
            let record = SampleRecord {
                id: format!("{}#{i}", d.id),
                scene_path: d.scene_path.clone(),
                question: turn.q.clone(),
                answers: vec![turn.a.clone()],
                dataset_kind: DatasetKind::Custom,
                question_type: QuestionType::OpenEnded,
                choices: None,
                ocr_text: None,
                excluded: false,
            };
            out.push(record.validated(None)?);
        }
    }
    Ok(out)
}

/// Which text the SQA length limit is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthCheck {
    BeforeFolding,
    #[default]
    AfterFolding,
}

#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub max_question_chars: usize,
    pub mc_option_separator: String,
    /// Removed from TextVQA questions (e.g. reference OCR token lists).
    pub strip_patterns: Vec<Regex>,
    pub length_check: LengthCheck,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            max_question_chars: 300,
            mc_option_separator: "\n".into(),
            strip_patterns: Vec::new(),
            length_check: LengthCheck::AfterFolding,
        }
    }
}

impl PrepConfig {
    pub fn strip_literal(mut self, literal: &str) -> Self {
        self.strip_patterns
            .push(Regex::new(&regex::escape(literal)).expect("escaped literal is a valid regex"));
        self
    }

    pub fn strip_regex(mut self, pattern: &str) -> Result<Self> {
        let re =
            Regex::new(pattern).map_err(|e| Error::invalid(format!("strip pattern {pattern:?}: {e}")))?;
        self.strip_patterns.push(re);
        Ok(self)
    }
}

/// Text appended to a multiple-choice question: one `"<label>. <text>"`
/// line per choice in label order.
pub fn fold_choices(choices: &[Choice], separator: &str) -> String {
    let mut sorted: Vec<&Choice> = choices.iter().collect();
    sorted.sort_by(|a, b| a.label.cmp(&b.label));
    sorted.iter().map(|c| format!("{separator}{}. {}", c.label, c.text)).collect()
}

fn strip_tokens(text: &str, patterns: &[Regex]) -> String {
    let mut current = collapse_whitespace(text);
    // Removing one match can splice together a new one.
    for _ in 0..16 {
        let mut next = current.clone();
        for re in patterns {
            next = re.replace_all(&next, "").into_owned();
        }
        let next = collapse_whitespace(&next);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Applies per-dataset question preparation. Idempotent.
pub fn prepare_question(record: &SampleRecord, config: &PrepConfig) -> SampleRecord {
    let mut out = record.clone();
    let suffix = match (&record.question_type, &record.choices) {
        (QuestionType::MultipleChoice, Some(choices)) => {
            Some(fold_choices(choices, &config.mc_option_separator))
        }
        _ => None,
    };
    let mut stem = match &suffix {
        Some(s) => record.question.strip_suffix(s.as_str()).unwrap_or(&record.question),
        None => &record.question,
    }
    .to_owned();

    if record.dataset_kind == DatasetKind::Textvqa && !config.strip_patterns.is_empty() {
        stem = strip_tokens(&stem, &config.strip_patterns);
    }

    let folded = match &suffix {
        Some(s) => format!("{stem}{s}"),
        None => stem.clone(),
    };

    if record.dataset_kind == DatasetKind::Sqa {
        let measured = match config.length_check {
            LengthCheck::BeforeFolding => &stem,
            LengthCheck::AfterFolding => &folded,
        };
        out.excluded = measured.chars().count() > config.max_question_chars;
    }
    out.question = folded;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(kind: DatasetKind, question: &str) -> SampleRecord {
        SampleRecord {
            id: "r".into(),
            scene_path: "x.png".into(),
            question: question.into(),
            answers: vec!["a".into()],
            dataset_kind: kind,
            question_type: QuestionType::OpenEnded,
            choices: None,
            ocr_text: None,
            excluded: false,
        }
    }

    fn mc(kind: DatasetKind, question: &str, n: usize) -> SampleRecord {
        let mut r = record(kind, question);
        r.question_type = QuestionType::MultipleChoice;
        r.answers = vec!["B".into()];
        // deliberately out of label order
        let mut choices: Vec<Choice> = ["A", "B", "C", "D", "E"][..n]
            .iter()
            .map(|l| Choice { label: (*l).into(), text: format!("option {}", l.to_lowercase()) })
            .collect();
        choices.reverse();
        r.choices = Some(choices);
        r
    }

    #[test]
    fn parses_three_lines_in_order() {
        let text = r#"{"id":"a","image":"1.png","question":"Q1?","answers":["x"],"dataset":"gqa","type":"open_ended"}
{"id":"b","image":"2.png","question":"Is it?","answers":["Yes"],"dataset":"pope","type":"binary"}

{"id":"c","image":"3.png","question":"Pick","answers":["A"],"dataset":"sqa","type":"multiple_choice","choices":[{"label":"A","text":"x"},{"label":"B","text":"y"}],"ocr":"Pick"}
"#;
        let recs = parse_manifest(text).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(recs[2].ocr_text.as_deref(), Some("Pick"));
    }

    #[test]
    fn empty_question_cites_line() {
        let text = r#"{"id":"a","image":"1.png","question":"Q?","answers":["x"],"dataset":"gqa","type":"open_ended"}
{"id":"b","image":"1.png","question":"   ","answers":["x"],"dataset":"gqa","type":"open_ended"}"#;
        match parse_manifest(text).unwrap_err() {
            Error::Validation { line, id, field, .. } => {
                assert_eq!(line, Some(2));
                assert_eq!(id, "b");
                assert_eq!(field, "question");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = r#"{"id":"q1","image":"1.png","question":"Q?","answers":["x"],"dataset":"gqa","type":"open_ended"}"#;
        let err = parse_manifest(&format!("{line}\n{line}\n")).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { line: 2, first_line: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_manifest("\n{not json").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn invariant_violations() {
        let mut r = record(DatasetKind::Pope, "Is there a dog?");
        r.question_type = QuestionType::Binary;
        r.answers = vec!["maybe".into()];
        assert_eq!(r.validate().unwrap_err().0, "answers");

        let mut r = mc(DatasetKind::Sqa, "Pick", 2);
        r.choices.as_mut().unwrap()[0].label = "F".into();
        assert_eq!(r.validate().unwrap_err().0, "choices");

        let mut r = mc(DatasetKind::Sqa, "Pick", 3);
        r.choices.as_mut().unwrap()[1].label = "A".into();
        r.choices.as_mut().unwrap()[0].label = "A".into();
        assert_eq!(r.validate().unwrap_err().0, "choices");

        assert_eq!(mc(DatasetKind::Sqa, "Pick", 1).validate().unwrap_err().0, "choices");

        let mut r = record(DatasetKind::Gqa, "Q");
        r.choices = mc(DatasetKind::Sqa, "x", 2).choices;
        assert_eq!(r.validate().unwrap_err().0, "choices");

        let mut r = record(DatasetKind::Gqa, "Q");
        r.answers.clear();
        assert_eq!(r.validate().unwrap_err().0, "answers");
    }

    #[test]
    fn dialogue_split_ids_and_counts() {
        let d = |id: &str, n: usize| Dialogue {
            id: id.into(),
            scene_path: "s.png".into(),
            turns: (0..n).map(|i| Turn { q: format!("q{i}?"), a: format!("a{i}") }).collect(),
        };
        let recs = split_dialogues(&[d("d0", 3)]).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["d0#0", "d0#1", "d0#2"]);
        assert_eq!(split_dialogues(&[d("x", 2), d("y", 1)]).unwrap().len(), 3);
        assert!(split_dialogues(&[d("e", 0)]).is_err());
    }

    #[test]
    fn pass_through_kinds_unchanged() {
        let r = record(DatasetKind::Gqa, "What is on the  table?");
        let cfg = PrepConfig::default().strip_literal("table");
        assert_eq!(prepare_question(&r, &cfg), r);
    }

    #[test]
    fn long_sqa_excluded() {
        let r = record(DatasetKind::Sqa, &"x".repeat(450));
        let p = prepare_question(&r, &PrepConfig::default());
        assert!(p.excluded);
        assert_eq!(p.question, r.question);
        let short = prepare_question(&record(DatasetKind::Sqa, "short?"), &PrepConfig::default());
        assert!(!short.excluded);
    }

    #[test]
    fn exclusion_order_is_configurable() {
        // 290-char stem, 4 folded options push it past 300
        let r = mc(DatasetKind::Sqa, &"q".repeat(290), 4);
        let after = prepare_question(&r, &PrepConfig::default());
        assert!(after.excluded);
        let cfg = PrepConfig { length_check: LengthCheck::BeforeFolding, ..PrepConfig::default() };
        assert!(!prepare_question(&r, &cfg).excluded);
    }

    #[test]
    fn choices_folded_in_label_order() {
        let r = mc(DatasetKind::Sqa, "Which is largest?", 4);
        let p = prepare_question(&r, &PrepConfig::default());
        assert_eq!(p.question, "Which is largest?\nA. option a\nB. option b\nC. option c\nD. option d");
        // parse the labels back out of the folded text
        let labels: Vec<&str> = p.question.lines().skip(1).map(|l| l.split_once(". ").unwrap().0).collect();
        assert_eq!(labels, ["A", "B", "C", "D"]);
    }

    #[test]
    fn textvqa_tokens_stripped() {
        let r = record(DatasetKind::Textvqa, "what brand is this? Reference OCR token: CANON, EOS");
        let cfg = PrepConfig::default().strip_regex(r"Reference OCR tokens?:.*$").unwrap();
        assert_eq!(prepare_question(&r, &cfg).question, "what brand is this?");
    }

    #[test]
    fn bad_regex_is_an_error() {
        assert!(PrepConfig::default().strip_regex("(").is_err());
    }
}
