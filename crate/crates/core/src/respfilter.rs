//! Answer extraction from raw model output and response-behavior
//! classification.
//!
//! In `auto` mode the strategies are tried in a fixed order: a JSON object
//! with an `Answer` field, then `The answer is X` / `Answer: X`, then (POPE
//! only) the whole response, then the trimmed response verbatim.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::manifest::{DatasetKind, SampleRecord};
use crate::metrics::edit_distance;
use crate::text::{collapse_whitespace, words};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    #[default]
    Auto,
    Json,
    Qra,
    Qa,
    Verbatim,
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(FilterMode::Auto),
            "json" => Ok(FilterMode::Json),
            "qra" => Ok(FilterMode::Qra),
            "qa" => Ok(FilterMode::Qa),
            "verbatim" => Ok(FilterMode::Verbatim),
            _ => Err(Error::invalid(format!("unknown filter mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    JsonField,
    AnswerPattern,
    RoleSplit,
    LastSentence,
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    UnawareCaption,
    AwareCaption,
    RepeatQuestion,
    WrongAnswer,
    CorrectAnswer,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::UnawareCaption => "unaware_caption",
            Behavior::AwareCaption => "aware_caption",
            Behavior::RepeatQuestion => "repeat_question",
            Behavior::WrongAnswer => "wrong_answer",
            Behavior::CorrectAnswer => "correct_answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detected_question: Option<String>,
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior: Option<Behavior>,
    /// Set when the requested mode could not apply and a fallback was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub flagged: bool,
}

impl FilterOutcome {
    fn new(answer: impl Into<String>, detected_question: Option<String>, strategy: Strategy) -> Self {
        FilterOutcome {
            answer: answer.into(),
            detected_question: detected_question.filter(|q| !q.is_empty()),
            strategy,
            behavior: None,
            flagged: false,
        }
    }

    fn verbatim(raw: &str) -> Self {
        FilterOutcome::new(raw.trim(), None, Strategy::Verbatim)
    }

    fn flag(mut self) -> Self {
        self.flagged = true;
        self
    }
}

/// Byte range of the first balanced `{...}` that parses as a JSON object.
fn find_json_object(raw: &str) -> Option<Map<String, Value>> {
    if let Ok(Value::Object(map)) = serde_json::from_str(raw.trim()) {
        return Some(map);
    }
    let bytes = raw.as_bytes();
    for (start, _) in raw.match_indices('{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Ok(Value::Object(map)) = serde_json::from_str(&raw[start..=start + off]) {
                            return Some(map);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

fn field<'a>(map: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names
        .iter()
        .find_map(|name| map.iter().find(|(k, _)| k.trim().eq_ignore_ascii_case(name)).map(|(_, v)| v))
}

fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_owned(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn from_json(raw: &str) -> Option<FilterOutcome> {
    let map = find_json_object(raw)?;
    let answer = field(&map, &["answer"])?;
    let question = field(&map, &["detected question", "the question in the image", "question"]);
    Some(FilterOutcome::new(value_text(answer), question.map(value_text), Strategy::JsonField))
}

fn answer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)\b(?:the\s+answer\s+is:?|answer:)\s*(.+?)(?:[.!?](?:\s|$)|\n|$)")
            .expect("valid regex")
    })
}

fn from_pattern(raw: &str) -> Option<FilterOutcome> {
    let caps = answer_pattern().captures(raw)?;
    let answer = caps.get(1)?.as_str().trim();
    (!answer.is_empty()).then(|| FilterOutcome::new(answer, None, Strategy::AnswerPattern))
}

/// Splits into sentences ending at `.`, `?` or `!` followed by whitespace or
/// end of text. Returns `(start, end_of_text, end_with_terminator)` byte
/// ranges of non-empty sentences.
fn sentences(raw: &str) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut iter = raw.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = iter.peek() {
            if matches!(d, '.' | '?' | '!') {
                end = j + d.len_utf8();
                iter.next();
            } else {
                break;
            }
        }
        let boundary = iter.peek().is_none_or(|&(_, d)| d.is_whitespace());
        if boundary {
            if !raw[start..i].trim().is_empty() {
                out.push((start, i, end));
            }
            start = end;
        }
    }
    if !raw[start..].trim().is_empty() {
        out.push((start, raw.len(), raw.len()));
    }
    out
}

fn last_sentence(raw: &str) -> FilterOutcome {
    let parts = sentences(raw);
    match parts.last() {
        None => FilterOutcome::new("", None, Strategy::LastSentence),
        Some(&(start, text_end, _)) => FilterOutcome::new(
            raw[start..text_end].trim(),
            Some(raw[..start].trim().to_owned()),
            Strategy::LastSentence,
        ),
    }
}

fn role_split(raw: &str, role_token: &str) -> Option<FilterOutcome> {
    if role_token.is_empty() {
        return None;
    }
    let idx = raw.rfind(role_token)?;
    Some(FilterOutcome::new(
        raw[idx + role_token.len()..].trim(),
        Some(raw[..idx].trim().to_owned()),
        Strategy::RoleSplit,
    ))
}

fn auto_chain(raw: &str, dataset_kind: DatasetKind) -> Option<FilterOutcome> {
    from_json(raw).or_else(|| from_pattern(raw)).or_else(|| {
        // POPE is scored on the presence of "no"/"not"; keep everything.
        (dataset_kind == DatasetKind::Pope).then(|| FilterOutcome::verbatim(raw))
    })
}

/// Extracts the final answer from a raw response. Never fails; fallbacks
/// are marked with `flagged`.
pub fn filter_response(
    raw: &str,
    mode: FilterMode,
    role_token: &str,
    dataset_kind: DatasetKind,
) -> FilterOutcome {
    if raw.trim().is_empty() {
        return FilterOutcome::verbatim(raw);
    }
    match mode {
        FilterMode::Auto => auto_chain(raw, dataset_kind).unwrap_or_else(|| FilterOutcome::verbatim(raw)),
        FilterMode::Json => match from_json(raw) {
            Some(o) => o,
            None => auto_chain(raw, dataset_kind).unwrap_or_else(|| FilterOutcome::verbatim(raw)).flag(),
        },
        FilterMode::Qra => role_split(raw, role_token).unwrap_or_else(|| FilterOutcome::verbatim(raw).flag()),
        FilterMode::Qa => last_sentence(raw),
        FilterMode::Verbatim => FilterOutcome::verbatim(raw),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorThresholds {
    /// Normalized edit similarity to the question at or above which an
    /// answer counts as a repetition.
    pub repeat_similarity: f64,
    /// Consecutive question words an answer must share to be a
    /// question-aware caption.
    pub aware_ngram: usize,
    /// Answers with at most this many words are plain (wrong) answers
    /// rather than captions.
    pub short_answer_words: usize,
}

impl Default for BehaviorThresholds {
    fn default() -> Self {
        BehaviorThresholds { repeat_similarity: 0.8, aware_ngram: 5, short_answer_words: 6 }
    }
}

/// `1 - d(a, b) / max(len a, len b)` after case folding and whitespace
/// collapsing.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let a = collapse_whitespace(&a.to_lowercase());
    let b = collapse_whitespace(&b.to_lowercase());
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(&a, &b) as f64 / longest as f64
}

fn shares_ngram(answer: &[String], question: &[String], n: usize) -> bool {
    n > 0 && answer.len() >= n && question.windows(n).any(|q| answer.windows(n).any(|a| a == q))
}

pub fn classify_behavior(
    outcome: &FilterOutcome,
    record: &SampleRecord,
    scored_correct: bool,
    thresholds: &BehaviorThresholds,
) -> Behavior {
    if scored_correct {
        return Behavior::CorrectAnswer;
    }
    if edit_similarity(&outcome.answer, &record.question) >= thresholds.repeat_similarity {
        return Behavior::RepeatQuestion;
    }
    let answer_words = words(&outcome.answer);
    let question_words = words(&record.question);
    let n = thresholds.aware_ngram.min(question_words.len());
    if n >= 2 && shares_ngram(&answer_words, &question_words, n) {
        return Behavior::AwareCaption;
    }
    if answer_words.len() <= thresholds.short_answer_words {
        Behavior::WrongAnswer
    } else {
        Behavior::UnawareCaption
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::QuestionType;
    use proptest::prelude::{prop_assert_eq, proptest};

    const CANON: &str = r#"{"Detected Question": "What is the brand of this camera?", "Answer": "Canon", "Reasoning": "The text 'Canon' is clearly visible on the camera body."}"#;

    fn filt(raw: &str, mode: FilterMode) -> FilterOutcome {
        filter_response(raw, mode, "ASSISTANT:", DatasetKind::Gqa)
    }

    fn record(q: &str) -> SampleRecord {
        SampleRecord {
            id: "r".into(),
            scene_path: "s.png".into(),
            question: q.into(),
            answers: vec!["red".into()],
            dataset_kind: DatasetKind::Gqa,
            question_type: QuestionType::OpenEnded,
            choices: None,
            ocr_text: None,
            excluded: false,
        }
    }

    #[test]
    fn json_example() {
        let o = filt(CANON, FilterMode::Auto);
        assert_eq!(o.answer, "Canon");
        assert_eq!(o.strategy, Strategy::JsonField);
        assert_eq!(o.detected_question.as_deref(), Some("What is the brand of this camera?"));
    }

    #[test]
    fn json_embedded_in_prose() {
        let raw = format!("Sure! Here you go:\n```json\n{CANON}\n```\nHope that helps. The answer is Nikon.");
        let o = filt(&raw, FilterMode::Auto);
        assert_eq!((o.answer.as_str(), o.strategy), ("Canon", Strategy::JsonField));
    }

    #[test]
    fn few_shot_json_key() {
        let o = filt(r#"{"The question in the image": "How many dogs?", "ANSWER": 2}"#, FilterMode::Json);
        assert_eq!(o.answer, "2");
        assert_eq!(o.detected_question.as_deref(), Some("How many dogs?"));
        assert!(!o.flagged);
    }

    #[test]
    fn answer_patterns() {
        let o = filt("I looked closely. The answer is a red hat. It is clear.", FilterMode::Auto);
        assert_eq!((o.answer.as_str(), o.strategy), ("a red hat", Strategy::AnswerPattern));
        assert_eq!(filt("Answer: 3.5", FilterMode::Auto).answer, "3.5");
        assert_eq!(filt("the ANSWER IS: yes\nbecause", FilterMode::Auto).answer, "yes");
    }

    #[test]
    fn pope_keeps_full_text() {
        let o = filter_response("No, there is not a dog.", FilterMode::Auto, "", DatasetKind::Pope);
        assert_eq!(o.answer, "No, there is not a dog.");
        assert_eq!(o.strategy, Strategy::Verbatim);
    }

    #[test]
    fn role_split_example() {
        let o = filt("What color is the hat? ASSISTANT: red", FilterMode::Qra);
        assert_eq!(o.answer, "red");
        assert_eq!(o.detected_question.as_deref(), Some("What color is the hat?"));
        assert_eq!(o.strategy, Strategy::RoleSplit);
        let o = filt("ASSISTANT: Q? ASSISTANT: blue", FilterMode::Qra);
        assert_eq!(o.answer, "blue");
    }

    #[test]
    fn role_missing_falls_back() {
        let o = filt("just red", FilterMode::Qra);
        assert_eq!((o.answer.as_str(), o.strategy, o.flagged), ("just red", Strategy::Verbatim, true));
    }

    #[test]
    fn last_sentence_mode() {
        let o = filt("What color is the hat? red", FilterMode::Qa);
        assert_eq!(o.answer, "red");
        assert_eq!(o.detected_question.as_deref(), Some("What color is the hat?"));
        let o = filt("What is it? It is red. Very red.", FilterMode::Qa);
        assert_eq!(o.answer, "Very red");
        assert_eq!(filt("Costs 3.5 dollars", FilterMode::Qa).answer, "Costs 3.5 dollars");
    }

    #[test]
    fn empty_input() {
        for mode in
            [FilterMode::Auto, FilterMode::Json, FilterMode::Qra, FilterMode::Qa, FilterMode::Verbatim]
        {
            let o = filt("", mode);
            assert_eq!((o.answer.as_str(), o.strategy), ("", Strategy::Verbatim));
        }
    }

    #[test]
    fn behaviors() {
        let q =
            "Where will these things eventually be seen? Answer the question using a single word or phrase.";
        let r = record(q);
        let t = BehaviorThresholds::default();
        let echo = filt(q, FilterMode::Auto);
        assert_eq!(classify_behavior(&echo, &r, false, &t), Behavior::RepeatQuestion);
        assert_eq!(classify_behavior(&echo, &r, true, &t), Behavior::CorrectAnswer);

        let aware = filt(
            "The image shows a caption asking where will these things eventually be seen, over a street with parked bicycles.",
            FilterMode::Verbatim,
        );
        assert_eq!(classify_behavior(&aware, &r, false, &t), Behavior::AwareCaption);

        let caption = filt(
            "A busy street with several parked bicycles and a bus in the background under a cloudy sky.",
            FilterMode::Verbatim,
        );
        assert_eq!(classify_behavior(&caption, &r, false, &t), Behavior::UnawareCaption);
        assert_eq!(
            classify_behavior(&filt("in the sky", FilterMode::Verbatim), &r, false, &t),
            Behavior::WrongAnswer
        );
    }

    /// Independent 5-gram scan used to double-check the classifier.
    fn ngram_oracle(answer: &str, question: &str, n: usize) -> bool {
        let a = words(answer).join(" ");
        let q = words(question);
        q.windows(n).any(|w| format!(" {a} ").contains(&format!(" {} ", w.join(" "))))
    }

    #[test]
    fn synthetic_caption_has_no_shared_ngram() {
        let q = "What is the man holding in his left hand near the fence?";
        let caption = "A sunny park scene with green grass, tall oak trees, a wooden bench, and children playing with a red kite.";
        assert!(!ngram_oracle(caption, q, 5));
        let o = filt(caption, FilterMode::Verbatim);
        assert_eq!(
            classify_behavior(&o, &record(q), false, &BehaviorThresholds::default()),
            Behavior::UnawareCaption
        );
    }

    proptest! {
        #[test]
        fn never_panics(raw in "\\PC{0,80}", mode in 0usize..5, role in "[A-Z:]{0,4}") {
            let mode = [FilterMode::Auto, FilterMode::Json, FilterMode::Qra, FilterMode::Qa, FilterMode::Verbatim][mode];
            let _ = filter_response(&raw, mode, &role, DatasetKind::Pope);
        }

        #[test]
        fn json_wins_over_pattern(ans in "[a-z]{1,8}", other in "[a-z]{1,8}") {
            let raw = format!(r#"The answer is {other}. {{"Answer": "{ans}"}}"#);
            let o = filter_response(&raw, FilterMode::Auto, "", DatasetKind::Gqa);
            prop_assert_eq!(o.strategy, Strategy::JsonField);
            prop_assert_eq!(o.answer, ans);
        }

        #[test]
        fn role_split_reassembles(q in "[a-zA-Z ?]{0,30}", a in "[a-zA-Z ]{0,20}") {
            let raw = format!("{q} ASSISTANT: {a}");
            let o = filter_response(&raw, FilterMode::Qra, "ASSISTANT:", DatasetKind::Gqa);
            let squash = |s: &str| s.split_whitespace().collect::<String>();
            let rebuilt = format!("{}ASSISTANT:{}", o.detected_question.clone().unwrap_or_default(), o.answer);
            prop_assert_eq!(squash(&rebuilt), squash(&raw));
        }
    }
}
