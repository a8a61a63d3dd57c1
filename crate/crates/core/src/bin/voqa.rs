use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use voqa::composite::{BBox, Method, Position, RenderInfo};
use voqa::harness::{self, run_eval, EndpointConfig, EvalConfig, EvalReport, ResponseCache, SampleResult};
use voqa::jsonl::{read_jsonl, write_jsonl};
use voqa::manifest::{load_manifest, DatasetKind, LengthCheck, SampleRecord};
use voqa::metrics::{qaa, score_answer, MatchPolicy, NormPolicy};
use voqa::prompts::{
    assemble_few_shot, build_demo_pool, build_ocr_assisted_prompt, build_prompt, light_prompt, template,
    Demo, PromptKind, PromptTarget, DEFAULT_POOL_SIZE,
};
use voqa::render::{render_manifest, RenderConfig, PREPARED_MANIFEST_FILE};
use voqa::respfilter::{classify_behavior, filter_response, BehaviorThresholds, FilterMode, FilterOutcome};
use voqa::sft::{build_sft_example, write_sft_jsonl, SftStrategy};
use voqa::{Error, Result};

#[derive(Parser, Serialize)]
#[command(name = "voqa", version, about = "Build and evaluate visual-only QA composites")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Cmd {
    /// Render composites for every record of a manifest.
    Render(RenderArgs),
    /// Print or batch-build prompts, including few-shot prompts.
    Prompt(PromptArgs),
    /// Extract answers from raw model responses.
    Filter(FilterArgs),
    /// Score filtered answers against a manifest.
    Score(ScoreArgs),
    /// Question alignment accuracy of predicted questions.
    Qaa(QaaArgs),
    /// Build fine-tuning sequences.
    Sft(SftArgs),
    /// Evaluate a model endpoint over a rendered benchmark.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Watermark,
    ConcatPad,
    ConcatResize,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Watermark => Method::Watermark,
            MethodArg::ConcatPad => Method::ConcatPad,
            MethodArg::ConcatResize => Method::ConcatResize,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LengthCheckArg {
    Before,
    After,
}

#[derive(Args, Serialize)]
struct RenderArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "watermark")]
    method: MethodArg,
    /// Concatenation side; drawn per record from the seed when omitted.
    #[arg(long, value_parser = parse_position)]
    position: Option<Position>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Regex removed from TextVQA questions; repeatable.
    #[arg(long = "strip")]
    strip_patterns: Vec<String>,
    #[arg(long, default_value_t = 300)]
    max_question_chars: usize,
    /// Separator placed before each folded multiple-choice option.
    #[arg(long, default_value = "\n")]
    mc_separator: String,
    #[arg(long, value_enum, default_value = "after")]
    length_check: LengthCheckArg,
    #[arg(long)]
    font: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PromptArgs {
    /// none, light, short_workflow, long_workflow or ocr_assisted.
    #[arg(long, default_value = "light", value_parser = parse_prompt_kind)]
    kind: PromptKind,
    /// Print the template without substitution.
    #[arg(long)]
    template: bool,
    /// Light prompt variant index.
    #[arg(long, default_value_t = 0)]
    variant: usize,
    /// Build prompts for every entry of this sidecar.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Records supplying OCR text for ocr_assisted prompts.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Question box as x0,y0,x1,y1 for a single prompt.
    #[arg(long, value_parser = parse_bbox)]
    bbox: Option<BBox>,
    #[arg(long, default_value_t = 0)]
    width: u32,
    #[arg(long, default_value_t = 0)]
    height: u32,
    #[arg(long)]
    ocr_text: Option<String>,
    /// Few-shot demonstrations per prompt (1, 2, 4 or 8).
    #[arg(long)]
    k: Option<usize>,
    /// Demonstration candidates, JSONL of {"id","image","question","answer","dataset"?}.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
    pool_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Composite directory used for few-shot target image paths.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct FilterArgs {
    /// JSONL of {"id","response"}.
    #[arg(long)]
    responses: PathBuf,
    #[arg(long, default_value = "auto", value_parser = parse_filter_mode)]
    mode: FilterMode,
    #[arg(long, default_value = "ASSISTANT:")]
    role_token: String,
    /// Supplies dataset kinds (POPE keeps full responses).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    Exact,
    VqaSoft,
}

impl From<PolicyArg> for MatchPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Exact => MatchPolicy::Exact,
            PolicyArg::VqaSoft => MatchPolicy::VqaSoft,
        }
    }
}

#[derive(Args, Serialize)]
struct ScoreArgs {
    /// Filter output: JSONL of {"id","answer",...}.
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    policy: PolicyArg,
    /// Directory for samples.jsonl and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct QaaArgs {
    /// JSONL of {"id", "question" | "questions" | "detected_question"}.
    #[arg(long)]
    pred: PathBuf,
    /// Manifest holding the reference questions.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Compare strings exactly instead of case-folded and whitespace-collapsed.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SftArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: SftStrategy,
    #[arg(long, default_value = "ASSISTANT:")]
    role_token: String,
    /// Composite directory; defaults to the manifest's directory.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct RunArgs {
    /// Endpoint config JSON ({"kind":"http",...} or {"kind":"subprocess",...}).
    #[arg(long)]
    endpoint: PathBuf,
    /// Output directory of `render`.
    #[arg(long)]
    renders: PathBuf,
    /// Defaults to the prepared manifest inside --renders.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "none", value_parser = parse_prompt_kind)]
    prompt_kind: PromptKind,
    #[arg(long, default_value = "auto", value_parser = parse_filter_mode)]
    filter_mode: FilterMode,
    #[arg(long, default_value = "ASSISTANT:")]
    role_token: String,
    #[arg(long, value_enum, default_value = "exact")]
    policy: PolicyArg,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
    /// Reuse cached responses from an earlier run in --out.
    #[arg(long)]
    resume: bool,
}

fn parse_position(s: &str) -> std::result::Result<Position, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_prompt_kind(s: &str) -> std::result::Result<PromptKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_filter_mode(s: &str) -> std::result::Result<FilterMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<SftStrategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_bbox(s: &str) -> std::result::Result<BBox, String> {
    let parts: Vec<u32> = s
        .trim_matches(|c| c == '[' || c == ']')
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("bbox: {e}"))?;
    match parts[..] {
        [x0, y0, x1, y1] if x0 < x1 && y0 < y1 => Ok(BBox::new(x0, y0, x1, y1)),
        _ => Err("bbox must be x0,y0,x1,y1 with x0<x1 and y0<y1".into()),
    }
}

/// Writes `<dir>/config.json` or `<file>.config.json` describing the
/// invocation.
fn write_snapshot(beside: &Path, is_dir: bool, cli: &Cli) -> Result<()> {
    let path = if is_dir {
        beside.join("config.json")
    } else {
        let mut name = beside.file_name().unwrap_or_default().to_os_string();
        name.push(".config.json");
        beside.with_file_name(name)
    };
    let snapshot = serde_json::json!({
        "tool": "voqa",
        "version": env!("CARGO_PKG_VERSION"),
        "invocation": cli,
    });
    let text = serde_json::to_string_pretty(&snapshot).expect("snapshot serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// A closed pipe (`voqa ... | head`) is not an error.
fn stdout_result(r: io::Result<()>) -> Result<()> {
    match r {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn print_out(text: &str) -> Result<()> {
    stdout_result(io::stdout().lock().write_all(text.as_bytes()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes JSONL to `out` (plus a snapshot) or to stdout.
fn emit<T: Serialize>(items: &[T], out: Option<&Path>, cli: &Cli) -> Result<()> {
    match out {
        Some(path) => {
            write_jsonl(items, create(path)?).map_err(|e| Error::io(path, e))?;
            write_snapshot(path, false, cli)
        }
        None => stdout_result(write_jsonl(items, io::stdout().lock())),
    }
}

fn cmd_render(args: &RenderArgs, cli: &Cli) -> Result<()> {
    let config = RenderConfig {
        method: args.method.into(),
        position: args.position,
        seed: args.seed,
        jobs: args.jobs,
        max_question_chars: args.max_question_chars,
        mc_option_separator: args.mc_separator.clone(),
        strip_patterns: args.strip_patterns.clone(),
        length_check: match args.length_check {
            LengthCheckArg::Before => LengthCheck::BeforeFolding,
            LengthCheckArg::After => LengthCheck::AfterFolding,
        },
        font: args.font.clone(),
    };
    let summary = render_manifest(&args.manifest, &args.out, &config)?;
    write_snapshot(&args.out, true, cli)?;
    eprintln!(
        "rendered {} composites, {} excluded, {} failed",
        summary.rendered,
        summary.excluded,
        summary.failed.len()
    );
    if let Some(first) = summary.failed.first() {
        let msg = format!(
            "{} records failed to render (first: {}: {})",
            summary.failed.len(),
            first.id,
            first.error
        );
        return Err(if summary.failed.iter().any(|f| f.io) {
            Error::io(&args.out, io::Error::other(msg))
        } else {
            Error::invalid(msg)
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct PromptLine {
    id: String,
    prompt: String,
}

fn cmd_prompt(args: &PromptArgs, cli: &Cli) -> Result<()> {
    let light = || light_prompt(args.variant).map(str::to_owned);
    if let Some(k) = args.k {
        return few_shot(args, k, cli);
    }
    if args.template {
        let text = match args.kind {
            PromptKind::Light => light()?,
            kind => template(kind).to_owned(),
        };
        return print_or_write(&text, args.out.as_deref(), cli);
    }
    if let Some(sidecar) = &args.sidecar {
        let infos = voqa::composite::load_sidecar(sidecar)?;
        let ocr: HashMap<String, Option<String>> = match &args.manifest {
            Some(m) => load_manifest(m)?.into_iter().map(|r| (r.id, r.ocr_text)).collect(),
            None => HashMap::new(),
        };
        let lines = infos
            .iter()
            .map(|info| {
                let prompt = match args.kind {
                    PromptKind::OcrAssisted => {
                        let text = ocr.get(&info.id).cloned().flatten().unwrap_or_default();
                        build_ocr_assisted_prompt(&text)
                            .map_err(|e| Error::invalid(format!("{}: {e}", info.id)))?
                    }
                    PromptKind::Light => light()?,
                    kind => build_prompt(kind, &PromptTarget::from(info))?,
                };
                Ok(PromptLine { id: info.id.clone(), prompt })
            })
            .collect::<Result<Vec<_>>>()?;
        return emit(&lines, args.out.as_deref(), cli);
    }
    let text = match args.kind {
        PromptKind::OcrAssisted => build_ocr_assisted_prompt(args.ocr_text.as_deref().unwrap_or(""))?,
        PromptKind::Light => light()?,
        kind => {
            build_prompt(kind, &PromptTarget { bbox: args.bbox, width: args.width, height: args.height })?
        }
    };
    print_or_write(&text, args.out.as_deref(), cli)
}

fn print_or_write(text: &str, out: Option<&Path>, cli: &Cli) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))?;
            write_snapshot(path, false, cli)
        }
        None => print_out(&format!("{text}\n")),
    }
}

#[derive(Serialize)]
struct FewShotLine {
    id: String,
    #[serde(flatten)]
    prompt: voqa::prompts::FewShotPrompt,
}

fn few_shot(args: &PromptArgs, k: usize, cli: &Cli) -> Result<()> {
    let pool_path = args.pool.as_ref().ok_or_else(|| Error::invalid("--k needs --pool"))?;
    let sidecar =
        args.sidecar.as_ref().ok_or_else(|| Error::invalid("--k needs --sidecar listing the targets"))?;
    let candidates: Vec<Demo> = read_jsonl(pool_path)?;
    let pool = build_demo_pool(&candidates, args.pool_size, args.seed);
    let image_dir =
        args.images.clone().or_else(|| sidecar.parent().map(Path::to_path_buf)).unwrap_or_default();
    let lines = voqa::composite::load_sidecar(sidecar)?
        .iter()
        .map(|info| {
            let image = image_dir.join(format!("{}.png", info.id));
            let prompt = assemble_few_shot(&pool, k, args.seed, &info.id, &image.to_string_lossy())?;
            Ok(FewShotLine { id: info.id.clone(), prompt })
        })
        .collect::<Result<Vec<_>>>()?;
    emit(&lines, args.out.as_deref(), cli)
}

#[derive(Deserialize)]
struct ResponseLine {
    id: String,
    response: String,
    #[serde(default)]
    dataset: Option<DatasetKind>,
}

#[derive(Serialize, Deserialize)]
struct OutcomeLine {
    id: String,
    #[serde(flatten)]
    outcome: FilterOutcome,
}

fn records_by_id(path: &Path) -> Result<HashMap<String, SampleRecord>> {
    Ok(load_manifest(path)?.into_iter().map(|r| (r.id.clone(), r)).collect())
}

fn cmd_filter(args: &FilterArgs, cli: &Cli) -> Result<()> {
    let responses: Vec<ResponseLine> = read_jsonl(&args.responses)?;
    let kinds: HashMap<String, DatasetKind> = match &args.manifest {
        Some(m) => records_by_id(m)?.into_iter().map(|(id, r)| (id, r.dataset_kind)).collect(),
        None => HashMap::new(),
    };
    let lines: Vec<OutcomeLine> = responses
        .iter()
        .map(|r| {
            let kind = kinds.get(&r.id).copied().or(r.dataset).unwrap_or(DatasetKind::Custom);
            OutcomeLine {
                id: r.id.clone(),
                outcome: filter_response(&r.response, args.mode, &args.role_token, kind),
            }
        })
        .collect();
    let flagged = lines.iter().filter(|l| l.outcome.flagged).count();
    if flagged > 0 {
        eprintln!("{flagged} responses used a fallback strategy");
    }
    emit(&lines, args.out.as_deref(), cli)
}

fn cmd_score(args: &ScoreArgs, cli: &Cli) -> Result<()> {
    let outcomes: Vec<OutcomeLine> = read_jsonl(&args.outcomes)?;
    let records = load_manifest(&args.manifest)?;
    let mut by_id: HashMap<&str, FilterOutcome> = HashMap::new();
    let known: HashMap<&str, &SampleRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    for line in &outcomes {
        if !known.contains_key(line.id.as_str()) {
            return Err(Error::invalid(format!("outcome {:?} has no manifest record", line.id)));
        }
        by_id.insert(&line.id, line.outcome.clone());
    }
    let policy: MatchPolicy = args.policy.into();
    let thresholds = BehaviorThresholds::default();
    let mut excluded = 0;
    let mut results = Vec::new();
    for record in &records {
        if record.excluded {
            excluded += 1;
            continue;
        }
        let mut result = SampleResult {
            id: record.id.clone(),
            dataset: record.dataset_kind.to_string(),
            response: None,
            outcome: None,
            correct: false,
            qaa: None,
            error: None,
        };
        match by_id.get(record.id.as_str()) {
            None => result.error = Some("no outcome".into()),
            Some(outcome) => {
                let mut outcome = outcome.clone();
                let score = score_answer(&outcome.answer, record, policy);
                outcome.behavior = Some(classify_behavior(&outcome, record, score.correct, &thresholds));
                result.correct = score.correct;
                result.qaa = outcome
                    .detected_question
                    .as_ref()
                    .and_then(|dq| qaa(&[dq], &record.question, NormPolicy::default()).ok())
                    .map(|q| q.qaa);
                result.outcome = Some(outcome);
            }
        }
        results.push(result);
    }
    let report = EvalReport::aggregate(&results, excluded, serde_json::to_value(cli).expect("serializes"));
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_report(dir, &results, &report)?;
        write_snapshot(dir, true, cli)?;
    }
    print_out(&report.to_table())
}

fn write_report(dir: &Path, results: &[SampleResult], report: &EvalReport) -> Result<()> {
    let samples = dir.join("samples.jsonl");
    harness::write_results(results, create(&samples)?).map_err(|e| Error::io(&samples, e))?;
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))?;
    let table = dir.join("report.txt");
    fs::write(&table, report.to_table()).map_err(|e| Error::io(&table, e))
}

#[derive(Deserialize)]
struct PredLine {
    id: String,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    questions: Option<Vec<String>>,
    #[serde(default)]
    detected_question: Option<String>,
}

#[derive(Serialize)]
struct QaaLine {
    id: String,
    qaa: f64,
    edit_distance: usize,
    ref_len: usize,
}

fn cmd_qaa(args: &QaaArgs, cli: &Cli) -> Result<()> {
    let preds: Vec<PredLine> = read_jsonl(&args.pred)?;
    let refs = records_by_id(&args.reference)?;
    let norm = if args.raw { NormPolicy::none() } else { NormPolicy::default() };
    let mut lines = Vec::with_capacity(preds.len());
    for p in &preds {
        let record = refs
            .get(&p.id)
            .ok_or_else(|| Error::invalid(format!("prediction {:?} has no reference record", p.id)))?;
        let candidates: Vec<&str> = match (&p.questions, &p.question, &p.detected_question) {
            (Some(qs), _, _) => qs.iter().map(String::as_str).collect(),
            (None, Some(q), _) | (None, None, Some(q)) => vec![q.as_str()],
            (None, None, None) => Vec::new(),
        };
        let r = qaa(&candidates, &record.question, norm)?;
        lines.push(QaaLine {
            id: p.id.clone(),
            qaa: r.qaa,
            edit_distance: r.edit_distance,
            ref_len: r.ref_len,
        });
    }
    let mean =
        if lines.is_empty() { 0.0 } else { lines.iter().map(|l| l.qaa).sum::<f64>() / lines.len() as f64 };
    emit(&lines, args.out.as_deref(), cli)?;
    print_out(&format!("mean_qaa {mean:.6} over {} samples\n", lines.len()))
}

fn cmd_sft(args: &SftArgs, cli: &Cli) -> Result<()> {
    let records = load_manifest(&args.manifest)?;
    let image_dir =
        args.images.clone().or_else(|| args.manifest.parent().map(Path::to_path_buf)).unwrap_or_default();
    let examples = records
        .iter()
        .filter(|r| !r.excluded)
        .map(|r| {
            let composite = image_dir.join(format!("{}.png", r.id));
            build_sft_example(r, Some(&composite.to_string_lossy()), args.strategy, &args.role_token)
        })
        .collect::<Result<Vec<_>>>()?;
    match &args.out {
        Some(path) => {
            write_sft_jsonl(&examples, create(path)?).map_err(|e| Error::io(path, e))?;
            write_snapshot(path, false, cli)
        }
        None => stdout_result(write_sft_jsonl(&examples, io::stdout().lock())),
    }
}

fn cmd_run(args: &RunArgs, cli: &Cli) -> Result<()> {
    let endpoint_config = EndpointConfig::load(&args.endpoint)?;
    let manifest = args.manifest.clone().unwrap_or_else(|| args.renders.join(PREPARED_MANIFEST_FILE));
    let records = load_manifest(&manifest)?;
    let artifacts: Vec<RenderInfo> = harness::load_artifacts(&args.renders)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_snapshot(&args.out, true, cli)?;

    let config = EvalConfig {
        prompt_kind: args.prompt_kind,
        filter_mode: args.filter_mode,
        role_token: args.role_token.clone(),
        match_policy: args.policy.into(),
        thresholds: BehaviorThresholds::default(),
        concurrency: args.concurrency,
        retries: args.retries,
        backoff_ms: args.backoff_ms,
    };
    let cache = ResponseCache::open(args.out.join("cache.jsonl"), args.resume)?;
    let endpoint = endpoint_config.connect()?;
    let failure_log = harness::failure_log_path(&args.out);
    let run = run_eval(
        &records,
        &artifacts,
        &args.renders,
        endpoint.as_ref(),
        &config,
        Some(&cache),
        Some(&failure_log),
    )?;
    write_report(&args.out, &run.samples, &run.report)?;
    print_out(&run.report.to_table())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Cmd::Render(a) => cmd_render(a, cli),
        Cmd::Prompt(a) => cmd_prompt(a, cli),
        Cmd::Filter(a) => cmd_filter(a, cli),
        Cmd::Score(a) => cmd_score(a, cli),
        Cmd::Qaa(a) => cmd_qaa(a, cli),
        Cmd::Sft(a) => cmd_sft(a, cli),
        Cmd::Run(a) => cmd_run(a, cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
