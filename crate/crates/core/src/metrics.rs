//! Edit distance, question alignment accuracy (QAA), and answer scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{QuestionType, SampleRecord};
use crate::text::{collapse_whitespace, contains_word, normalize_answer};

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Text normalization applied to both sides before QAA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormPolicy {
    pub collapse_whitespace: bool,
    pub casefold: bool,
}

impl Default for NormPolicy {
    fn default() -> Self {
        NormPolicy { collapse_whitespace: true, casefold: true }
    }
}

impl NormPolicy {
    /// Compare strings exactly as given.
    pub fn none() -> Self {
        NormPolicy { collapse_whitespace: false, casefold: false }
    }

    pub fn apply(&self, s: &str) -> String {
        let s = if self.casefold { s.to_lowercase() } else { s.to_owned() };
        if self.collapse_whitespace {
            collapse_whitespace(&s)
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaaResult {
    pub qaa: f64,
    pub edit_distance: usize,
    pub ref_len: usize,
    pub candidate_used: String,
}

/// `max(0, 1 - min_c d(c, ref) / len(ref))` over the predicted question
/// candidates. An empty candidate list counts as `[""]`.
pub fn qaa<S: AsRef<str>>(candidates: &[S], reference: &str, norm: NormPolicy) -> Result<QaaResult> {
    let reference = norm.apply(reference);
    let ref_len = reference.chars().count();
    if ref_len == 0 {
        return Err(Error::invalid("QAA reference question is empty"));
    }
    let (distance, used) = if candidates.is_empty() {
        (ref_len, String::new())
    } else {
        candidates
            .iter()
            .map(|c| (edit_distance(&norm.apply(c.as_ref()), &reference), c.as_ref()))
            // first candidate wins ties
            .fold(None::<(usize, &str)>, |best, cur| match best {
                Some(b) if b.0 <= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map(|(d, c)| (d, c.to_owned()))
            .expect("non-empty")
    };
    Ok(QaaResult {
        qaa: (1.0 - distance as f64 / ref_len as f64).max(0.0),
        edit_distance: distance,
        ref_len,
        candidate_used: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    /// Exact normalized match against any reference answer.
    #[default]
    Exact,
    /// VQA-style soft accuracy `min(matches / 3, 1) >= 0.5`, used for
    /// open-ended records carrying ten reference answers.
    VqaSoft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFlag {
    NoChoiceLetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<ScoreFlag>,
}

/// `"no"` when the text contains the word "no" or "not", otherwise `"yes"`.
pub fn binary_reading(text: &str) -> &'static str {
    if contains_word(text, "no") || contains_word(text, "not") {
        "no"
    } else {
        "yes"
    }
}

/// First standalone letter A-E (case-insensitive), uppercased.
pub fn choice_letter(text: &str) -> Option<char> {
    let chars: Vec<char> = text.chars().collect();
    chars.iter().enumerate().find_map(|(i, &c)| {
        let upper = c.to_ascii_uppercase();
        let standalone = !i.checked_sub(1).is_some_and(|p| chars[p].is_alphanumeric())
            && !chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        (('A'..='E').contains(&upper) && standalone).then_some(upper)
    })
}

/// Scores an extracted answer against the record's ground truth according
/// to its question type.
pub fn score_answer(extracted: &str, record: &SampleRecord, policy: MatchPolicy) -> AnswerScore {
    let ok = |correct| AnswerScore { correct, flag: None };
    let Some(truth) = record.answers.first() else {
        return ok(false);
    };
    match record.question_type {
        QuestionType::OpenEnded => {
            let pred = normalize_answer(extracted);
            let matches = record.answers.iter().filter(|a| normalize_answer(a) == pred).count();
            if policy == MatchPolicy::VqaSoft && record.answers.len() == 10 {
                ok((matches as f64 / 3.0).min(1.0) >= 0.5)
            } else {
                ok(matches > 0)
            }
        }
        QuestionType::Binary => ok(binary_reading(extracted) == normalize_answer(truth)),
        QuestionType::MultipleChoice => match choice_letter(extracted) {
            Some(letter) => ok(choice_letter(truth) == Some(letter)),
            None => AnswerScore { correct: false, flag: Some(ScoreFlag::NoChoiceLetter) },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Choice, DatasetKind};
    use proptest::prelude::*;

    fn record(qt: QuestionType, answers: &[&str]) -> SampleRecord {
        SampleRecord {
            id: "s".into(),
            scene_path: "s.png".into(),
            question: "Q?".into(),
            answers: answers.iter().map(|s| s.to_string()).collect(),
            dataset_kind: DatasetKind::Custom,
            question_type: qt,
            choices: (qt == QuestionType::MultipleChoice)
                .then(|| ["A", "B", "C"].map(|l| Choice { label: l.into(), text: "x".into() }).to_vec()),
            ocr_text: None,
            excluded: false,
        }
    }

    /// Full-table Levenshtein used as an independent oracle.
    fn dp_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in t.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in t[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = usize::from(a[i - 1] != b[j - 1]);
                t[i][j] = (t[i - 1][j] + 1).min(t[i][j - 1] + 1).min(t[i - 1][j - 1] + cost);
            }
        }
        t[a.len()][b.len()]
    }

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance("abc", "abc"), 0);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(dp_oracle("kitten", "sitting"), 3);
        assert_eq!(edit_distance("naïve", "naive"), 1);
    }

    #[test]
    fn qaa_examples() {
        let q = "What color is the hat?";
        assert_eq!(qaa(&[q], q, NormPolicy::default()).unwrap().qaa, 1.0);
        let r = qaa(&[""], "what color?", NormPolicy::default()).unwrap();
        assert_eq!((r.qaa, r.ref_len), (0.0, 11));
        let r = qaa(&["what colour?"], "what color?", NormPolicy::default()).unwrap();
        assert_eq!(r.edit_distance, 1);
        assert!((r.qaa - 10.0 / 11.0).abs() < 1e-12);
        assert_eq!(qaa::<&str>(&[], "abc", NormPolicy::default()).unwrap().qaa, 0.0);
        assert!(qaa(&["x"], "   ", NormPolicy::default()).is_err());
    }

    #[test]
    fn qaa_clamps_and_picks_best_candidate() {
        let r = qaa(&["a very long unrelated prediction", "wat?"], "what?", NormPolicy::default()).unwrap();
        assert_eq!(r.candidate_used, "wat?");
        let r = qaa(&["a very long unrelated prediction"], "what?", NormPolicy::default()).unwrap();
        assert_eq!(r.qaa, 0.0);
    }

    #[test]
    fn normalization_switchable() {
        let r = qaa(&["WHAT  is it?"], "what is it?", NormPolicy::default()).unwrap();
        assert_eq!(r.qaa, 1.0);
        let r = qaa(&["WHAT  is it?"], "what is it?", NormPolicy::none()).unwrap();
        assert!(r.qaa < 1.0);
    }

    #[test]
    fn scoring_examples() {
        let open = record(QuestionType::OpenEnded, &["road"]);
        assert!(score_answer("Road.", &open, MatchPolicy::Exact).correct);
        assert!(!score_answer("street", &open, MatchPolicy::Exact).correct);

        let no = record(QuestionType::Binary, &["no"]);
        assert!(score_answer("There is no dog", &no, MatchPolicy::Exact).correct);
        let yes = record(QuestionType::Binary, &["yes"]);
        assert!(!score_answer("There is no dog", &yes, MatchPolicy::Exact).correct);
        assert!(score_answer("Yes, a dog is present", &yes, MatchPolicy::Exact).correct);

        let mc = record(QuestionType::MultipleChoice, &["B"]);
        assert!(score_answer("The answer is B", &mc, MatchPolicy::Exact).correct);
        assert!(score_answer("(b)", &mc, MatchPolicy::Exact).correct);
        let s = score_answer("none of them", &mc, MatchPolicy::Exact);
        assert_eq!((s.correct, s.flag), (false, Some(ScoreFlag::NoChoiceLetter)));
    }

    #[test]
    fn choice_letters() {
        assert_eq!(choice_letter("The answer is B"), Some('B'));
        assert_eq!(choice_letter("Bold choice: C."), Some('C'));
        assert_eq!(choice_letter("option d"), Some('D'));
        assert_eq!(choice_letter("Fig"), None);
    }

    #[test]
    fn soft_vqa_accuracy() {
        let mut answers = vec!["red"; 2];
        answers.extend(["blue"; 8]);
        let r = record(QuestionType::OpenEnded, &answers);
        assert!(score_answer("red", &r, MatchPolicy::VqaSoft).correct);
        let mut answers = vec!["red"; 1];
        answers.extend(["blue"; 9]);
        let r = record(QuestionType::OpenEnded, &answers);
        assert!(!score_answer("red", &r, MatchPolicy::VqaSoft).correct);
        assert!(score_answer("red", &r, MatchPolicy::Exact).correct);
    }

    proptest! {
        #[test]
        fn distance_matches_oracle(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            prop_assert_eq!(edit_distance(&a, &b), dp_oracle(&a, &b));
        }

        #[test]
        fn distance_symmetric_and_triangle(a in "[a-d]{0,10}", b in "[a-d]{0,10}", c in "[a-d]{0,10}") {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }

        #[test]
        fn qaa_bounded_and_monotone(cands in prop::collection::vec("[a-c ]{0,12}", 0..4), extra in "[a-c ]{0,12}", reference in "[a-c]{1,12}") {
            let base = qaa(&cands, &reference, NormPolicy::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&base.qaa));
            let mut more = cands.clone();
            more.push(extra);
            prop_assert!(qaa(&more, &reference, NormPolicy::default()).unwrap().qaa >= base.qaa);
        }

        #[test]
        fn scoring_ignores_case_and_padding(s in "[a-zA-Z ]{0,20}", pad in " {0,3}") {
            for r in [
                record(QuestionType::OpenEnded, &["red hat"]),
                record(QuestionType::Binary, &["no"]),
                record(QuestionType::MultipleChoice, &["C"]),
            ] {
                let base = score_answer(&s, &r, MatchPolicy::Exact);
                let varied = format!("{pad}{}{pad}", s.to_uppercase());
                prop_assert_eq!(score_answer(&varied, &r, MatchPolicy::Exact), base);
            }
        }
    }
}
