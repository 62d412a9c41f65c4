//! Experiment orchestration: run a cohort through both modes, aggregate,
//! and write `table3.csv`, `report.json` and `summary.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::bundled_mock_fixtures;
use crate::detect::DetectorConfig;
use crate::extract::{Backend, ChatClient, ExtractError, MockFixtures, PromptTemplate, RetryPolicy};
use crate::guide::{run_pipeline, CaseResult, Mode, MATCH_IOU};
use crate::metrics::{average_precision_pooled, boost_percent, dsc, match_detections, mean_class_precision, Verdict};
use crate::phantom::{generate_cohort, CohortCase, CohortSpec, PhantomError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("report schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Rule,
    Chat,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Chat completion URL; required for `chat`.
    pub endpoint: Option<String>,
    /// Mock fixture file; the bundled corpus answers are used when unset.
    pub fixtures: Option<PathBuf>,
    pub template: PromptTemplate,
    pub retry: RetryPolicy,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Rule,
            endpoint: None,
            fixtures: None,
            template: PromptTemplate::default(),
            retry: RetryPolicy::default(),
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Backend, HarnessError> {
        Ok(match self.kind {
            BackendKind::Rule => Backend::RuleBased,
            BackendKind::Mock => {
                let fixtures = match &self.fixtures {
                    Some(p) => MockFixtures::load(p)?,
                    None => bundled_mock_fixtures(),
                };
                Backend::Mock { fixtures, template: self.template.clone() }
            }
            BackendKind::Chat => {
                let endpoint =
                    self.endpoint.clone().ok_or_else(|| HarnessError::Config("chat backend needs an endpoint".into()))?;
                let mut client = ChatClient::from_env(endpoint, self.template.clone());
                client.retry = self.retry;
                Backend::Chat(client)
            }
        })
    }
}

fn default_cohort() -> String {
    "table3".into()
}

fn default_seed() -> u64 {
    42
}

/// Full experiment configuration, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `table3`, `random:<n>`, or a path to a cohort spec JSON file.
    #[serde(default = "default_cohort")]
    pub cohort: String,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    /// Where artifacts go; nothing is written when unset.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads for case-parallel execution; 0 uses all cores.
    #[serde(default)]
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            cohort: default_cohort(),
            detector: DetectorConfig::default(),
            backend: BackendConfig::default(),
            out_dir: None,
            seed: default_seed(),
            parallelism: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn cohort_spec(&self) -> Result<CohortSpec, HarnessError> {
        if self.cohort == "table3" {
            return Ok(CohortSpec::table3());
        }
        if let Some(n) = self.cohort.strip_prefix("random:") {
            let n: usize = n.parse().map_err(|_| HarnessError::Config(format!("bad cohort size in {:?}", self.cohort)))?;
            return Ok(CohortSpec::random(n, self.seed));
        }
        let path = Path::new(&self.cohort);
        if !path.exists() {
            return Err(HarnessError::Config(format!("cohort file {} does not exist", path.display())));
        }
        Ok(CohortSpec::load(path)?)
    }
}

/// One case in one mode: a result or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case_id: u32,
    pub mode: Mode,
    pub ground_truth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<CaseResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// DSC of each kept mask that matched a ground-truth tumor.
    pub tumor_dsc: Vec<f64>,
}

impl CaseRow {
    pub fn verdict(&self) -> Option<Verdict> {
        self.result.as_ref().map(|r| r.outcome.verdict)
    }

    pub fn is_match(&self) -> bool {
        self.verdict() == Some(Verdict::Match)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub matches: usize,
    pub errors: usize,
    pub match_rate: f64,
    /// Mean DSC over kept masks matched to a tumor; null when none matched.
    pub mean_tumor_dsc: Option<f64>,
    pub ap50: Option<f64>,
    pub ap70: Option<f64>,
    /// `TP / (TP + FP)` over all kept candidates at IoU 0.5.
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cohort: String,
    pub seed: u64,
    pub backend: String,
    pub n_cases: usize,
    pub rows: Vec<CaseRow>,
    pub unguided: ModeSummary,
    pub guided: ModeSummary,
    pub unguided_match_rate: f64,
    pub guided_match_rate: f64,
    /// `100 · (guided − unguided) / unguided`; null when unguided is 0.
    pub boost_percent: Option<f64>,
    /// Difference of match rates in percentage points.
    pub match_rate_diff_pp: f64,
}

impl ExperimentReport {
    pub fn rows_for(&self, mode: Mode) -> impl Iterator<Item = &CaseRow> {
        self.rows.iter().filter(move |r| r.mode == mode)
    }
}

fn run_case(case: &CohortCase, mode: Mode, cfg: &DetectorConfig, backend: &Backend) -> CaseRow {
    let gt = case.gt_boxes.len();
    match run_pipeline(case, mode, cfg, Some(backend)) {
        Ok(result) => {
            let m = match_detections(&result.kept_detections(), &case.gt_bboxes(), MATCH_IOU);
            let tumor_dsc = m
                .pairs
                .iter()
                .map(|&(di, gi, _)| dsc(&result.masks[di], &case.gt_masks[gi]).expect("shared geometry"))
                .collect();
            CaseRow { case_id: case.case_id(), mode, ground_truth: gt, result: Some(result), error: None, tumor_dsc }
        }
        Err(e) => CaseRow {
            case_id: case.case_id(),
            mode,
            ground_truth: gt,
            result: None,
            error: Some(e.to_string()),
            tumor_dsc: Vec::new(),
        },
    }
}

fn summarize(mode: Mode, rows: &[CaseRow], cases: &[CohortCase]) -> ModeSummary {
    let rows: Vec<&CaseRow> = rows.iter().filter(|r| r.mode == mode).collect();
    let n = rows.len().max(1);
    let matches = rows.iter().filter(|r| r.is_match()).count();
    let dscs: Vec<f64> = rows.iter().flat_map(|r| r.tumor_dsc.iter().copied()).collect();
    let images: Vec<_> = rows
        .iter()
        .zip(cases)
        .map(|(r, c)| (r.result.as_ref().map(|x| x.kept_detections()).unwrap_or_default(), c.gt_bboxes()))
        .collect();
    let pooled = images.iter().fold(crate::metrics::MatchResult::default(), |mut acc, (d, g)| {
        let m = match_detections(d, g, MATCH_IOU);
        acc.tp += m.tp;
        acc.fp += m.fp;
        acc.fn_ += m.fn_;
        acc
    });
    ModeSummary {
        mode,
        matches,
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        match_rate: matches as f64 / n as f64,
        mean_tumor_dsc: (!dscs.is_empty()).then(|| dscs.iter().sum::<f64>() / dscs.len() as f64),
        ap50: average_precision_pooled(&images, 0.5).ok(),
        ap70: average_precision_pooled(&images, 0.7).ok(),
        precision: mean_class_precision(&[pooled]).unwrap_or(0.0),
    }
}

/// Runs both modes on every case of an already generated cohort.
pub fn run_cases(
    cohort_name: &str,
    cases: &[CohortCase],
    cfg: &ExperimentConfig,
    backend: &Backend,
) -> Result<ExperimentReport, HarnessError> {
    if cases.is_empty() {
        return Err(HarnessError::Config("cohort has no cases".into()));
    }
    let work = || -> Vec<CaseRow> {
        cases
            .par_iter()
            .flat_map_iter(|c| [Mode::Unguided, Mode::Guided].map(|m| run_case(c, m, &cfg.detector, backend)))
            .collect()
    };
    let mut rows = if cfg.parallelism == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.parallelism)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?
            .install(work)
    };
    rows.sort_by_key(|r| (r.case_id, r.mode));
    let mut sorted_cases: Vec<CohortCase> = cases.to_vec();
    sorted_cases.sort_by_key(|c| c.case_id());

    let unguided = summarize(Mode::Unguided, &rows, &sorted_cases);
    let guided = summarize(Mode::Guided, &rows, &sorted_cases);
    let n = cases.len();
    Ok(ExperimentReport {
        cohort: cohort_name.to_string(),
        seed: cfg.seed,
        backend: backend.name().to_string(),
        n_cases: n,
        unguided_match_rate: unguided.match_rate,
        guided_match_rate: guided.match_rate,
        boost_percent: boost_percent(unguided.matches, guided.matches, n).ok(),
        match_rate_diff_pp: 100.0 * (guided.matches as f64 - unguided.matches as f64) / n as f64,
        rows,
        unguided,
        guided,
    })
}

/// Generates the cohort, runs it, and writes artifacts when `out_dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let spec = cfg.cohort_spec()?;
    let cases = generate_cohort(&spec, cfg.seed)?;
    let backend = cfg.backend.build()?;
    let report = run_cases(&spec.name, &cases, cfg, &backend)?;
    if let Some(dir) = &cfg.out_dir {
        emit_reports(&report, dir)?;
    }
    Ok(report)
}

pub const CSV_HEADER: [&str; 5] = ["case_id", "ground_truth", "detected_nodules", "removed_nodules", "matching_ground_truth"];

/// Table-shaped CSV of the guided rows.
pub fn table3_csv(report: &ExperimentReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in report.rows_for(Mode::Guided) {
        let record = match &row.result {
            Some(r) => [
                row.case_id.to_string(),
                row.ground_truth.to_string(),
                r.detected.to_string(),
                r.removed.to_string(),
                r.outcome.verdict.label().to_string(),
            ],
            None => [
                row.case_id.to_string(),
                row.ground_truth.to_string(),
                String::new(),
                String::new(),
                format!("error: {}", row.error.as_deref().unwrap_or("unknown")),
            ],
        };
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}%"))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

pub fn summary_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let n = report.n_cases;
    let _ = writeln!(s, "cohort {} ({} cases), seed {}, backend {}", report.cohort, n, report.seed, report.backend);
    let _ = writeln!(s);
    let _ = writeln!(s, "case  gt  detected  removed  match");
    for row in report.rows_for(Mode::Guided) {
        match &row.result {
            Some(r) => {
                let _ = writeln!(
                    s,
                    "{:>4}  {:>2}  {:>8}  {:>7}  {}",
                    row.case_id,
                    row.ground_truth,
                    r.detected,
                    r.removed,
                    r.outcome.verdict.label()
                );
            }
            None => {
                let _ = writeln!(s, "{:>4}  {:>2}  error: {}", row.case_id, row.ground_truth, row.error.as_deref().unwrap_or(""));
            }
        }
    }
    let _ = writeln!(s);
    for m in [&report.unguided, &report.guided] {
        let _ = writeln!(
            s,
            "{:<9} matches {}/{} ({:.1}%), mean tumor DSC {}, AP@0.5 {}, AP@0.7 {}, precision {:.3}",
            m.mode.to_string(),
            m.matches,
            n,
            100.0 * m.match_rate,
            opt(m.mean_tumor_dsc),
            opt(m.ap50),
            opt(m.ap70),
            m.precision
        );
    }
    let _ = writeln!(s, "boost {} ({:+.1} percentage points)", pct(report.boost_percent), report.match_rate_diff_pp);
    s
}

/// Writes `table3.csv`, `report.json` and `summary.txt` into `dir`.
pub fn emit_reports(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("table3.csv"), table3_csv(report)?)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    fs::write(dir.join("summary.txt"), summary_text(report))?;
    Ok(())
}

fn field<'a>(v: &'a Value, key: &str, at: &str) -> Result<&'a Value, HarnessError> {
    v.get(key).ok_or_else(|| HarnessError::Schema(format!("{at}: missing {key:?}")))
}

fn rate(v: &Value, key: &str, at: &str) -> Result<f64, HarnessError> {
    let x = field(v, key, at)?.as_f64().ok_or_else(|| HarnessError::Schema(format!("{at}.{key}: not a number")))?;
    if !(0.0..=1.0).contains(&x) {
        return Err(HarnessError::Schema(format!("{at}.{key}: {x} outside [0, 1]")));
    }
    Ok(x)
}

fn uint(v: &Value, key: &str, at: &str) -> Result<u64, HarnessError> {
    field(v, key, at)?.as_u64().ok_or_else(|| HarnessError::Schema(format!("{at}.{key}: not a non-negative integer")))
}

fn nullable_number(v: &Value, key: &str, at: &str) -> Result<Option<f64>, HarnessError> {
    match field(v, key, at)? {
        Value::Null => Ok(None),
        x => x.as_f64().map(Some).ok_or_else(|| HarnessError::Schema(format!("{at}.{key}: not a number or null"))),
    }
}

/// Checks `report.json` against its documented structure and its internal
/// consistency, then parses it.
pub fn validate_report_json(text: &str) -> Result<ExperimentReport, HarnessError> {
    let v: Value = serde_json::from_str(text)?;
    let n = uint(&v, "n_cases", "report")? as usize;
    field(&v, "cohort", "report")?.as_str().ok_or_else(|| HarnessError::Schema("report.cohort: not a string".into()))?;
    uint(&v, "seed", "report")?;
    let backend = field(&v, "backend", "report")?.as_str().unwrap_or_default();
    if !["rule", "chat", "mock"].contains(&backend) {
        return Err(HarnessError::Schema(format!("report.backend: unknown {backend:?}")));
    }
    let ur = rate(&v, "unguided_match_rate", "report")?;
    let gr = rate(&v, "guided_match_rate", "report")?;
    let boost = nullable_number(&v, "boost_percent", "report")?;
    nullable_number(&v, "match_rate_diff_pp", "report")?;

    let rows = field(&v, "rows", "report")?.as_array().ok_or_else(|| HarnessError::Schema("report.rows: not an array".into()))?;
    if rows.len() != 2 * n {
        return Err(HarnessError::Schema(format!("report.rows: {} rows for {n} cases", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        let at = format!("rows[{i}]");
        uint(row, "case_id", &at)?;
        uint(row, "ground_truth", &at)?;
        let mode = field(row, "mode", &at)?.as_str().unwrap_or_default();
        if mode != "guided" && mode != "unguided" {
            return Err(HarnessError::Schema(format!("{at}.mode: unknown {mode:?}")));
        }
        match (row.get("result"), row.get("error")) {
            (Some(r), None) => {
                let detected = uint(r, "detected", &at)?;
                let removed = uint(r, "removed", &at)?;
                let discarded = uint(r, "discarded_no_lobe", &at)?;
                let kept = field(r, "kept", &at)?.as_array().map_or(0, Vec::len) as u64;
                let balance = if mode == "guided" { removed + discarded + kept } else { removed + kept };
                if balance != detected {
                    return Err(HarnessError::Schema(format!("{at}: counts do not add up to detected")));
                }
                let verdict = field(field(r, "outcome", &at)?, "verdict", &at)?.as_str().unwrap_or_default();
                if !["Match", "NoFN", "NoFP"].contains(&verdict) {
                    return Err(HarnessError::Schema(format!("{at}: unknown verdict {verdict:?}")));
                }
            }
            (None, Some(e)) if e.is_string() => {}
            _ => return Err(HarnessError::Schema(format!("{at}: needs exactly one of result or error"))),
        }
    }
    for key in ["unguided", "guided"] {
        let m = field(&v, key, "report")?;
        rate(m, "match_rate", key)?;
        rate(m, "precision", key)?;
        uint(m, "matches", key)?;
        for k in ["mean_tumor_dsc", "ap50", "ap70"] {
            if let Some(x) = nullable_number(m, k, key)? {
                if !(0.0..=1.0).contains(&x) {
                    return Err(HarnessError::Schema(format!("{key}.{k}: {x} outside [0, 1]")));
                }
            }
        }
    }
    if let Some(b) = boost {
        if ur == 0.0 || (b - 100.0 * (gr - ur) / ur).abs() > 1e-9 {
            return Err(HarnessError::Schema("boost_percent inconsistent with match rates".into()));
        }
    }
    let report: ExperimentReport = serde_json::from_value(v)?;
    Ok(report)
}
