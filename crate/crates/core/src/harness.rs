//! Evaluation driver: sends composites and prompts to a model endpoint,
//! filters and scores the responses, and aggregates a report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::composite::RenderInfo;
use crate::error::{Error, Result};
use crate::manifest::SampleRecord;
use crate::metrics::{qaa, score_answer, MatchPolicy, NormPolicy};
use crate::prompts::{build_ocr_assisted_prompt, build_prompt, PromptKind, PromptTarget};
use crate::respfilter::{
    classify_behavior, filter_response, Behavior, BehaviorThresholds, FilterMode, FilterOutcome,
};

/// Environment variable holding the bearer token for HTTP endpoints.
pub const TOKEN_ENV: &str = "VOQA_API_TOKEN";

pub struct Request<'a> {
    pub sample_id: &'a str,
    pub image_path: &'a Path,
    pub prompt: &'a str,
}

/// A model that answers one image + prompt with text.
pub trait Endpoint: Send + Sync {
    /// Stable identifier, part of the response cache key.
    fn id(&self) -> &str;
    fn query(&self, request: &Request<'_>) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EndpointConfig {
    Http {
        id: String,
        url: String,
        #[serde(default)]
        model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Subprocess {
        id: String,
        command: Vec<String>,
    },
}

fn default_timeout() -> u64 {
    120
}

impl EndpointConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
    }

    pub fn connect(&self) -> Result<Box<dyn Endpoint>> {
        match self {
            EndpointConfig::Http { id, url, model, timeout_secs } => {
                Ok(Box::new(HttpEndpoint::new(id, url, model, Duration::from_secs(*timeout_secs))))
            }
            EndpointConfig::Subprocess { id, command } => {
                Ok(Box::new(SubprocessEndpoint::spawn(id, command)?))
            }
        }
    }
}

/// Chat-style JSON over HTTP: one user message carrying the base64 PNG and
/// the prompt; the reply's `content` field is the response.
pub struct HttpEndpoint {
    id: String,
    url: String,
    model: String,
    agent: ureq::Agent,
    token: Option<String>,
}

impl HttpEndpoint {
    pub fn new(id: &str, url: &str, model: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpEndpoint {
            id: id.to_owned(),
            url: url.to_owned(),
            model: model.to_owned(),
            agent,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        }
    }
}

#[derive(Deserialize)]
struct HttpReply {
    content: String,
}

impl Endpoint for HttpEndpoint {
    fn id(&self) -> &str {
        &self.id
    }

    fn query(&self, request: &Request<'_>) -> Result<String> {
        let bytes = fs::read(request.image_path).map_err(|e| Error::io(request.image_path, e))?;
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "image", "data": base64::engine::general_purpose::STANDARD.encode(bytes)},
                    {"type": "text", "text": request.prompt},
                ],
            }],
        });
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp =
            req.send(body.to_string()).map_err(|e| Error::Endpoint(format!("{}: {e}", self.url)))?;
        let text =
            resp.body_mut().read_to_string().map_err(|e| Error::Endpoint(format!("{}: {e}", self.url)))?;
        let reply: HttpReply = serde_json::from_str(&text)
            .map_err(|e| Error::Endpoint(format!("{}: bad reply: {e}", self.url)))?;
        Ok(reply.content)
    }
}

/// A long-running child process speaking one JSON object per line:
/// `{"id","image_path","prompt"}` in, `{"id","response"}` out.
pub struct SubprocessEndpoint {
    id: String,
    io: Mutex<(ChildStdin, BufReader<ChildStdout>)>,
    child: Mutex<Child>,
}

impl SubprocessEndpoint {
    pub fn spawn(id: &str, command: &[String]) -> Result<Self> {
        let (program, args) =
            command.split_first().ok_or_else(|| Error::invalid("subprocess endpoint needs a command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessEndpoint {
            id: id.to_owned(),
            io: Mutex::new((stdin, stdout)),
            child: Mutex::new(child),
        })
    }
}

#[derive(Serialize)]
struct SubprocessRequest<'a> {
    id: &'a str,
    image_path: &'a Path,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct SubprocessReply {
    id: String,
    response: String,
}

impl Endpoint for SubprocessEndpoint {
    fn id(&self) -> &str {
        &self.id
    }

    fn query(&self, request: &Request<'_>) -> Result<String> {
        let mut guard = self.io.lock().unwrap_or_else(|e| e.into_inner());
        let (stdin, stdout) = &mut *guard;
        let broken = |e: std::io::Error| Error::Endpoint(format!("subprocess {}: {e}", self.id));
        let mut line = serde_json::to_string(&SubprocessRequest {
            id: request.sample_id,
            image_path: request.image_path,
            prompt: request.prompt,
        })
        .expect("request serializes");
        line.push('\n');
        stdin.write_all(line.as_bytes()).map_err(broken)?;
        stdin.flush().map_err(broken)?;
        let mut reply = String::new();
        if stdout.read_line(&mut reply).map_err(broken)? == 0 {
            return Err(Error::Endpoint(format!("subprocess {} closed its output", self.id)));
        }
        let reply: SubprocessReply = serde_json::from_str(&reply)
            .map_err(|e| Error::Endpoint(format!("subprocess {}: bad reply: {e}", self.id)))?;
        if reply.id != request.sample_id {
            return Err(Error::Endpoint(format!(
                "subprocess {} answered {:?} for request {:?}",
                self.id, reply.id, request.sample_id
            )));
        }
        Ok(reply.response)
    }
}

impl Drop for SubprocessEndpoint {
    fn drop(&mut self) {
        let child = self.child.get_mut().unwrap_or_else(|e| e.into_inner());
        let _ = child.kill();
        let _ = child.wait();
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes()).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
struct CacheEntry {
    endpoint: String,
    id: String,
    prompt_sha256: String,
    response: String,
}

/// Append-only JSONL of successful responses keyed by
/// (endpoint id, sample id, prompt hash).
pub struct ResponseCache {
    entries: Mutex<HashMap<(String, String, String), String>>,
    file: Mutex<BufWriter<File>>,
}

impl ResponseCache {
    /// Opens `path`, loading existing entries when `resume` is set and
    /// truncating otherwise. Unparseable lines (e.g. a torn final write) are
    /// skipped.
    pub fn open(path: impl AsRef<Path>, resume: bool) -> Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        if resume && path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if let Ok(e) = serde_json::from_str::<CacheEntry>(&line) {
                    entries.insert((e.endpoint, e.id, e.prompt_sha256), e.response);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(resume)
            .write(true)
            .truncate(!resume)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ResponseCache { entries: Mutex::new(entries), file: Mutex::new(BufWriter::new(file)) })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, endpoint: &str, id: &str, hash: &str) -> Option<String> {
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(&(endpoint.to_owned(), id.to_owned(), hash.to_owned()))
            .cloned()
    }

    fn put(&self, endpoint: &str, id: &str, hash: &str, response: &str) -> std::io::Result<()> {
        let entry = CacheEntry {
            endpoint: endpoint.to_owned(),
            id: id.to_owned(),
            prompt_sha256: hash.to_owned(),
            response: response.to_owned(),
        };
        {
            let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
            serde_json::to_writer(&mut *file, &entry)?;
            file.write_all(b"\n")?;
            file.flush()?;
        }
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert((entry.endpoint, entry.id, entry.prompt_sha256), entry.response);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub prompt_kind: PromptKind,
    pub filter_mode: FilterMode,
    pub role_token: String,
    pub match_policy: MatchPolicy,
    pub thresholds: BehaviorThresholds,
    pub concurrency: usize,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            prompt_kind: PromptKind::None,
            filter_mode: FilterMode::Auto,
            role_token: "ASSISTANT:".into(),
            match_policy: MatchPolicy::Exact,
            thresholds: BehaviorThresholds::default(),
            concurrency: 4,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<FilterOutcome>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qaa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_dataset: BTreeMap<String, DatasetStats>,
    pub overall_accuracy: f64,
    pub qaa_correct: Option<f64>,
    pub qaa_incorrect: Option<f64>,
    pub behavior_histogram: BTreeMap<Behavior, usize>,
    pub total: usize,
    pub excluded: usize,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub errored: Vec<String>,
    pub run_config: serde_json::Value,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl EvalReport {
    /// Aggregates per-sample results. Order of `results` does not matter.
    pub fn aggregate(results: &[SampleResult], excluded: usize, run_config: serde_json::Value) -> Self {
        let mut sorted: Vec<&SampleResult> = results.iter().collect();
        sorted.sort_by(|a, b| a.id.cmp(&b.id));

        let mut per_dataset: BTreeMap<String, DatasetStats> = BTreeMap::new();
        let mut behavior_histogram = BTreeMap::new();
        let (mut qaa_ok, mut qaa_bad) = (Vec::new(), Vec::new());
        let mut errored = Vec::new();
        let (mut n_correct, mut n_incorrect) = (0, 0);
        for r in sorted {
            if r.error.is_some() {
                errored.push(r.id.clone());
                continue;
            }
            let stats = per_dataset.entry(r.dataset.clone()).or_insert(DatasetStats {
                n: 0,
                correct: 0,
                accuracy: 0.0,
            });
            stats.n += 1;
            if r.correct {
                stats.correct += 1;
                n_correct += 1;
            } else {
                n_incorrect += 1;
            }
            if let Some(b) = r.outcome.as_ref().and_then(|o| o.behavior) {
                *behavior_histogram.entry(b).or_insert(0) += 1;
            }
            if let Some(q) = r.qaa {
                if r.correct { &mut qaa_ok } else { &mut qaa_bad }.push(q);
            }
        }
        for stats in per_dataset.values_mut() {
            stats.accuracy = stats.correct as f64 / stats.n as f64;
        }
        let scored = n_correct + n_incorrect;
        EvalReport {
            per_dataset,
            overall_accuracy: if scored == 0 { 0.0 } else { n_correct as f64 / scored as f64 },
            qaa_correct: mean(&qaa_ok),
            qaa_incorrect: mean(&qaa_bad),
            behavior_histogram,
            total: results.len(),
            excluded,
            n_correct,
            n_incorrect,
            errored,
            run_config,
        }
    }

    pub fn to_table(&self) -> String {
        let pct = |x: f64| format!("{:.1}", 100.0 * x);
        let opt = |x: Option<f64>| x.map(pct).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8}", "dataset", "n", "correct", "acc%");
        for (name, s) in &self.per_dataset {
            let _ = writeln!(out, "{:<12} {:>8} {:>8} {:>8}", name, s.n, s.correct, pct(s.accuracy));
        }
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8}",
            "overall",
            self.n_correct + self.n_incorrect,
            self.n_correct,
            pct(self.overall_accuracy)
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "QAA correct%   {}", opt(self.qaa_correct));
        let _ = writeln!(out, "QAA incorrect% {}", opt(self.qaa_incorrect));
        let _ = writeln!(out, "errored        {}", self.errored.len());
        let _ = writeln!(out, "excluded       {}", self.excluded);
        if !self.behavior_histogram.is_empty() {
            let _ = writeln!(out);
            for (b, n) in &self.behavior_histogram {
                let _ = writeln!(out, "{:<16} {n}", b.to_string());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub samples: Vec<SampleResult>,
}

fn sample_prompt(record: &SampleRecord, info: &RenderInfo, kind: PromptKind) -> Result<String> {
    match kind {
        PromptKind::OcrAssisted => build_ocr_assisted_prompt(record.ocr_text.as_deref().unwrap_or("")),
        _ => build_prompt(kind, &PromptTarget::from(info)),
    }
}

fn query_with_retries(endpoint: &dyn Endpoint, request: &Request<'_>, config: &EvalConfig) -> Result<String> {
    let mut attempt = 0;
    loop {
        match endpoint.query(request) {
            Ok(text) => return Ok(text),
            Err(e) if attempt >= config.retries => return Err(e),
            Err(_) => {
                thread::sleep(Duration::from_millis(config.backoff_ms.saturating_mul(1 << attempt.min(16))));
                attempt += 1;
            }
        }
    }
}

fn evaluate_one(
    record: &SampleRecord,
    info: &RenderInfo,
    image_dir: &Path,
    endpoint: &dyn Endpoint,
    cache: Option<&ResponseCache>,
    config: &EvalConfig,
) -> SampleResult {
    let mut result = SampleResult {
        id: record.id.clone(),
        dataset: record.dataset_kind.to_string(),
        response: None,
        outcome: None,
        correct: false,
        qaa: None,
        error: None,
    };
    let prompt = match sample_prompt(record, info, config.prompt_kind) {
        Ok(p) => p,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let hash = prompt_hash(&prompt);
    let cached = cache.and_then(|c| c.get(endpoint.id(), &record.id, &hash));
    let response = match cached {
        Some(r) => r,
        None => {
            let image_path = image_dir.join(format!("{}.png", record.id));
            let request = Request { sample_id: &record.id, image_path: &image_path, prompt: &prompt };
            match query_with_retries(endpoint, &request, config) {
                Ok(r) => {
                    if let Some(c) = cache {
                        if let Err(e) = c.put(endpoint.id(), &record.id, &hash, &r) {
                            log_warn(&format!("cache write failed for {}: {e}", record.id));
                        }
                    }
                    r
                }
                Err(e) => {
                    result.error = Some(e.to_string());
                    return result;
                }
            }
        }
    };
    let mut outcome = filter_response(&response, config.filter_mode, &config.role_token, record.dataset_kind);
    let score = score_answer(&outcome.answer, record, config.match_policy);
    outcome.behavior = Some(classify_behavior(&outcome, record, score.correct, &config.thresholds));
    result.qaa = outcome
        .detected_question
        .as_ref()
        .and_then(|dq| qaa(&[dq], &record.question, NormPolicy::default()).ok())
        .map(|r| r.qaa);
    result.correct = score.correct;
    result.response = Some(response);
    result.outcome = Some(outcome);
    result
}

fn log_warn(msg: &str) {
    eprintln!("warning: {msg}");
}

pub fn write_results<W: Write>(results: &[SampleResult], mut out: W) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Evaluates every non-excluded record against its composite
/// `<image_dir>/<id>.png` (with `artifacts` giving bbox and size).
///
/// Per-sample failures are reported as errored. If every sample fails, the
/// per-sample log is still written to `failure_log` (when given) and the
/// run fails.
pub fn run_eval(
    records: &[SampleRecord],
    artifacts: &[RenderInfo],
    image_dir: &Path,
    endpoint: &dyn Endpoint,
    config: &EvalConfig,
    cache: Option<&ResponseCache>,
    failure_log: Option<&Path>,
) -> Result<EvalRun> {
    if config.concurrency == 0 {
        return Err(Error::invalid("concurrency must be at least 1"));
    }
    let by_id: HashMap<&str, &RenderInfo> = artifacts.iter().map(|a| (a.id.as_str(), a)).collect();
    let mut jobs = Vec::new();
    let mut excluded = 0;
    for record in records {
        if record.excluded {
            excluded += 1;
            continue;
        }
        let info = by_id
            .get(record.id.as_str())
            .ok_or_else(|| Error::invalid(format!("no composite for record {:?}", record.id)))?;
        jobs.push((record, *info));
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SampleResult>>> = Mutex::new(vec![None; jobs.len()]);
    thread::scope(|scope| {
        for _ in 0..config.concurrency.min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((record, info)) = jobs.get(i) else { break };
                let r = evaluate_one(record, info, image_dir, endpoint, cache, config);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    let samples: Vec<SampleResult> = slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();

    let run_config = serde_json::json!({
        "endpoint": endpoint.id(),
        "eval": config,
    });
    let report = EvalReport::aggregate(&samples, excluded, run_config);
    if !samples.is_empty() && report.errored.len() == samples.len() {
        if let Some(path) = failure_log {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            write_results(&samples, BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
        }
        return Err(Error::AllSamplesFailed {
            count: samples.len(),
            log: failure_log.map(Path::to_path_buf),
        });
    }
    Ok(EvalRun { report, samples })
}

/// Reads `<dir>/sidecar.jsonl`.
pub fn load_artifacts(dir: &Path) -> Result<Vec<RenderInfo>> {
    crate::composite::load_sidecar(dir.join(SIDECAR_FILE))
}

pub const SIDECAR_FILE: &str = "sidecar.jsonl";

pub fn failure_log_path(out: &Path) -> PathBuf {
    out.join("failed_samples.jsonl")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::{BBox, Method};
    use crate::manifest::{DatasetKind, QuestionType};
    use std::sync::atomic::AtomicU32;

    fn record(i: usize) -> SampleRecord {
        SampleRecord {
            id: format!("s{i:02}"),
            scene_path: "x.png".into(),
            question: format!("What is on table number {i}?"),
            answers: vec![format!("cup{i}")],
            dataset_kind: if i.is_multiple_of(2) { DatasetKind::Gqa } else { DatasetKind::Textvqa },
            question_type: QuestionType::OpenEnded,
            choices: None,
            ocr_text: None,
            excluded: false,
        }
    }

    fn info(id: &str) -> RenderInfo {
        RenderInfo {
            id: id.into(),
            bbox: BBox::new(0, 0, 10, 10),
            method: Method::Watermark,
            position: None,
            color: None,
            provenance: None,
            width: 64,
            height: 64,
        }
    }

    struct Scripted<F: Fn(&str) -> Result<String> + Send + Sync> {
        calls: AtomicU32,
        answer: F,
    }

    impl<F: Fn(&str) -> Result<String> + Send + Sync> Endpoint for Scripted<F> {
        fn id(&self) -> &str {
            "scripted"
        }
        fn query(&self, request: &Request<'_>) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            (self.answer)(request.sample_id)
        }
    }

    fn fixture(n: usize) -> (Vec<SampleRecord>, Vec<RenderInfo>) {
        let records: Vec<_> = (0..n).map(record).collect();
        let infos = records.iter().map(|r| info(&r.id)).collect();
        (records, infos)
    }

    fn fast() -> EvalConfig {
        EvalConfig { backoff_ms: 0, ..EvalConfig::default() }
    }

    #[test]
    fn oracle_endpoint_is_perfect() {
        let (records, infos) = fixture(6);
        let ep = Scripted {
            calls: AtomicU32::new(0),
            answer: |id: &str| Ok(format!("cup{}", id[1..].parse::<usize>().unwrap())),
        };
        let run = run_eval(&records, &infos, Path::new("."), &ep, &fast(), None, None).unwrap();
        assert_eq!(run.report.overall_accuracy, 1.0);
        assert_eq!(run.report.per_dataset["gqa"].n, 3);
        assert_eq!(run.report.behavior_histogram[&Behavior::CorrectAnswer], 6);
    }

    #[test]
    fn json_with_right_question_wrong_answer() {
        let (records, infos) = fixture(4);
        let ep = Scripted {
            calls: AtomicU32::new(0),
            answer: |id: &str| {
                let i: usize = id[1..].parse().unwrap();
                Ok(format!(r#"{{"Detected Question": "What is on table number {i}?", "Answer": "plate"}}"#))
            },
        };
        let cfg = EvalConfig { prompt_kind: PromptKind::ShortWorkflow, ..fast() };
        let run = run_eval(&records, &infos, Path::new("."), &ep, &cfg, None, None).unwrap();
        assert_eq!(run.report.overall_accuracy, 0.0);
        assert!((run.report.qaa_incorrect.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(run.report.qaa_correct, None);
    }

    #[test]
    fn retries_then_errors() {
        let (records, infos) = fixture(3);
        let ep = Scripted {
            calls: AtomicU32::new(0),
            answer: |id: &str| if id == "s01" { Err(Error::Endpoint("down".into())) } else { Ok("x".into()) },
        };
        let run = run_eval(&records, &infos, Path::new("."), &ep, &fast(), None, None).unwrap();
        assert_eq!(run.report.errored, vec!["s01".to_owned()]);
        assert_eq!(run.report.n_correct + run.report.n_incorrect + run.report.errored.len(), 3);
        // 2 successes + 1 failure with 3 retries
        assert_eq!(ep.calls.load(Ordering::SeqCst), 2 + 4);
    }

    #[test]
    fn all_failed_keeps_log() {
        let dir = tempfile::tempdir().unwrap();
        let (records, infos) = fixture(2);
        let ep =
            Scripted { calls: AtomicU32::new(0), answer: |_: &str| Err(Error::Endpoint("refused".into())) };
        let log = dir.path().join("fail.jsonl");
        let err = run_eval(&records, &infos, dir.path(), &ep, &fast(), None, Some(&log)).unwrap_err();
        assert!(matches!(err, Error::AllSamplesFailed { count: 2, .. }));
        assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 2);
    }

    #[test]
    fn excluded_and_missing_artifacts() {
        let (mut records, infos) = fixture(3);
        records[2].excluded = true;
        let ep = Scripted { calls: AtomicU32::new(0), answer: |_: &str| Ok("x".into()) };
        let run = run_eval(&records, &infos[..2], Path::new("."), &ep, &fast(), None, None).unwrap();
        assert_eq!((run.report.total, run.report.excluded), (2, 1));
        records[2].excluded = false;
        assert!(run_eval(&records, &infos[..2], Path::new("."), &ep, &fast(), None, None).is_err());
    }

    #[test]
    fn cache_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let (records, infos) = fixture(4);
        let ep = Scripted { calls: AtomicU32::new(0), answer: |_: &str| Ok("x".into()) };
        {
            let cache = ResponseCache::open(&path, false).unwrap();
            run_eval(&records, &infos, dir.path(), &ep, &fast(), Some(&cache), None).unwrap();
        }
        assert_eq!(ep.calls.load(Ordering::SeqCst), 4);
        let cache = ResponseCache::open(&path, true).unwrap();
        assert_eq!(cache.len(), 4);
        run_eval(&records, &infos, dir.path(), &ep, &fast(), Some(&cache), None).unwrap();
        assert_eq!(ep.calls.load(Ordering::SeqCst), 4);
        // a different prompt misses the cache
        let cfg = EvalConfig { prompt_kind: PromptKind::Light, ..fast() };
        run_eval(&records, &infos, dir.path(), &ep, &cfg, Some(&cache), None).unwrap();
        assert_eq!(ep.calls.load(Ordering::SeqCst), 8);
        assert!(ResponseCache::open(&path, false).unwrap().is_empty());
    }

    #[test]
    fn aggregation_ignores_order() {
        let (records, infos) = fixture(8);
        let ep = Scripted {
            calls: AtomicU32::new(0),
            answer: |id: &str| Ok(if id < "s04" { "cup0".into() } else { id.into() }),
        };
        let run = run_eval(&records, &infos, Path::new("."), &ep, &fast(), None, None).unwrap();
        let mut reversed = run.samples.clone();
        reversed.reverse();
        let again = EvalReport::aggregate(&reversed, 0, run.report.run_config.clone());
        assert_eq!(again, run.report);
        assert!(run.report.to_table().contains("overall"));
    }

    #[test]
    fn sha256_reference() {
        assert_eq!(prompt_hash("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
