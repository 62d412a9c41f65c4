use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use noduleguide::detect::{detect_candidates, to_json_lines, DetectorConfig};
use noduleguide::extract::extract_phenotype;
use noduleguide::guide::{run_pipeline, Mode};
use noduleguide::harness::{run_experiment, summary_text, BackendConfig, BackendKind, ExperimentConfig};
use noduleguide::phantom::{generate_cohort, CohortCase, CohortSpec};
use noduleguide::voxelcore::read_volume;

type BoxError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "noduleguide", version, about = "Report-guided lung nodule false-positive reduction")]
struct Cli {
    /// JSON file supplying defaults for any flag, keyed by subcommand
    /// (`phantom_gen`, `detect`, `extract`, `pipeline`, `eval_run`, `eval_table3`).
    #[arg(long, global = true)]
    settings: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic cohorts.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Detect candidates in an EXNV volume and write JSON lines.
    Detect(DetectArgs),
    /// Extract a tumor phenotype from a report.
    Extract(ExtractArgs),
    /// Run one case directory through the pipeline.
    Pipeline(PipelineArgs),
    /// Experiments.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum PhantomCmd {
    /// Generate a cohort into one directory per case.
    Gen(PhantomGenArgs),
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Run a full experiment from a config file.
    Run(EvalRunArgs),
    /// Run the bundled ten-case cohort with rule-based extraction.
    Table3(EvalTable3Args),
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct PhantomGenArgs {
    /// Cohort spec JSON, or `table3` for the bundled fixture.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct DetectArgs {
    #[arg(long)]
    vol: Option<PathBuf>,
    /// Detector config JSON; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    case_id: Option<u32>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default)]
struct BackendArgs {
    /// rule, chat or mock.
    #[arg(long)]
    backend: Option<String>,
    /// Mock fixture file (mock backend).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Chat completion URL (chat backend).
    #[arg(long)]
    endpoint: Option<String>,
}

impl BackendArgs {
    fn merge(self, other: BackendArgs) -> BackendArgs {
        BackendArgs {
            backend: self.backend.or(other.backend),
            fixtures: self.fixtures.or(other.fixtures),
            endpoint: self.endpoint.or(other.endpoint),
        }
    }

    fn config(&self) -> Result<BackendConfig, BoxError> {
        let kind = match self.backend.as_deref().unwrap_or("rule") {
            "rule" => BackendKind::Rule,
            "chat" => BackendKind::Chat,
            "mock" => BackendKind::Mock,
            other => return Err(format!("unknown backend {other:?}, expected rule, chat or mock").into()),
        };
        Ok(BackendConfig { kind, endpoint: self.endpoint.clone(), fixtures: self.fixtures.clone(), ..Default::default() })
    }
}

#[derive(Args, Deserialize, Default)]
#[serde(default)]
struct ExtractArgs {
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    backend: BackendArgs,
}

#[derive(Args, Deserialize, Default)]
#[serde(default)]
struct PipelineArgs {
    #[arg(long)]
    case: Option<PathBuf>,
    /// guided or unguided.
    #[arg(long)]
    mode: Option<String>,
    /// Detector config JSON.
    #[arg(long)]
    detector: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    backend: BackendArgs,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EvalRunArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EvalTable3Args {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    phantom_gen: PhantomGenArgs,
    detect: DetectArgs,
    extract: ExtractArgs,
    pipeline: PipelineArgs,
    eval_run: EvalRunArgs,
    eval_table3: EvalTable3Args,
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, BoxError> {
    value.ok_or_else(|| format!("missing --{flag}").into())
}

fn load_detector(path: Option<&Path>) -> Result<DetectorConfig, BoxError> {
    Ok(match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => DetectorConfig::default(),
    })
}

fn phantom_gen(args: PhantomGenArgs, base: PhantomGenArgs) -> Result<(), BoxError> {
    let spec_src = required(args.spec.or(base.spec), "spec")?;
    let seed = args.seed.or(base.seed).unwrap_or(42);
    let out = required(args.out.or(base.out), "out")?;
    let spec = if spec_src == "table3" { CohortSpec::table3() } else { CohortSpec::load(&spec_src)? };
    let cases = generate_cohort(&spec, seed)?;
    fs::create_dir_all(&out)?;
    fs::write(out.join("cohort.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    for case in &cases {
        case.write_dir(out.join(format!("case_{:02}", case.case_id())))?;
    }
    println!("wrote {} cases to {}", cases.len(), out.display());
    Ok(())
}

fn detect(args: DetectArgs, base: DetectArgs) -> Result<(), BoxError> {
    let vol = read_volume(required(args.vol.or(base.vol), "vol")?)?;
    let cfg = load_detector(args.config.or(base.config).as_deref())?;
    let out = required(args.out.or(base.out), "out")?;
    let cands = detect_candidates(&vol, &cfg)?;
    fs::write(&out, to_json_lines(args.case_id.or(base.case_id).unwrap_or(0), &cands))?;
    println!("{} candidates written to {}", cands.len(), out.display());
    Ok(())
}

fn extract(args: ExtractArgs, base: ExtractArgs) -> Result<(), BoxError> {
    let report = fs::read_to_string(required(args.report.or(base.report), "report")?)?;
    let backend = args.backend.merge(base.backend).config()?.build()?;
    let phenotype = extract_phenotype(&report, &backend)?;
    println!("{}", serde_json::to_string_pretty(&phenotype)?);
    Ok(())
}

fn pipeline(args: PipelineArgs, base: PipelineArgs) -> Result<(), BoxError> {
    let case = CohortCase::read_dir(required(args.case.or(base.case), "case")?)?;
    let mode: Mode = args.mode.or(base.mode).unwrap_or_else(|| "guided".into()).parse()?;
    let cfg = load_detector(args.detector.or(base.detector).as_deref())?;
    let backend = args.backend.merge(base.backend).config()?.build()?;
    let result = run_pipeline(&case, mode, &cfg, Some(&backend))?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn eval_run(args: EvalRunArgs, base: EvalRunArgs) -> Result<(), BoxError> {
    let mut cfg = ExperimentConfig::load(required(args.config.or(base.config), "config")?)?;
    if let Some(out) = args.out.or(base.out) {
        cfg.out_dir = Some(out);
    }
    let report = run_experiment(&cfg)?;
    print!("{}", summary_text(&report));
    Ok(())
}

fn eval_table3(args: EvalTable3Args, base: EvalTable3Args) -> Result<(), BoxError> {
    let cfg = ExperimentConfig {
        seed: args.seed.or(base.seed).unwrap_or(42),
        out_dir: args.out.or(base.out),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    print!("{}", summary_text(&report));
    Ok(())
}

fn run(cli: Cli) -> Result<(), BoxError> {
    let settings: Settings = match &cli.settings {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => Settings::default(),
    };
    match cli.command {
        Command::Phantom(PhantomCmd::Gen(a)) => phantom_gen(a, settings.phantom_gen),
        Command::Detect(a) => detect(a, settings.detect),
        Command::Extract(a) => extract(a, settings.extract),
        Command::Pipeline(a) => pipeline(a, settings.pipeline),
        Command::Eval(EvalCmd::Run(a)) => eval_run(a, settings.eval_run),
        Command::Eval(EvalCmd::Table3(a)) => eval_table3(a, settings.eval_table3),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
