use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use madl::pipeline::{
    run_pipeline, stage_detect, stage_eval, stage_label, stage_localize, stage_map, stage_review, stage_synth,
    with_pool, FrameRange, FrameStatus, PipelineConfig, Sequence, StageReport,
};
use serde_json::{json, Value};

/// Exit status when a stage finished but some frames failed.
const EXIT_FRAME_FAILURES: u8 = 3;

#[derive(Parser)]
#[command(name = "madl", version, about = "Map-based labeling of drivable areas and curbs from LiDAR sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; defaults apply to missing sections and keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Frame ids to process: a..b (end exclusive), a.., ..b or a single id.
    #[arg(long)]
    frames: Option<FrameRange>,
    /// Output directory, overriding `paths.output` (for `synth`, the
    /// sequence directory to write).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Detect curbs in each scan: detections/{id}.json and .label.
    Detect(Common),
    /// Build the semantic map from the detections: map.ply.
    Map(Common),
    /// Register each frame against the map: localization.jsonl.
    Localize(Common),
    /// Generate masks and curb labels from the map: labels/.
    Label(Common),
    /// Review labeled frames and quarantine discarded ones.
    Review(Common),
    /// Score retained labels against the sequence truth; --frames is ignored.
    Eval(Common),
    /// Write the configured synthetic sequence.
    Synth(Common),
    /// Run detect, map, localize, label and review and write manifest.json.
    Run(Common),
    /// Print the default config as TOML.
    Config,
}

fn load_config(common: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.paths.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_json(r: &StageReport) -> Value {
    json!({
        "stage": r.stage,
        "processed": r.processed.len(),
        "skipped": r.skipped,
        "failures": r.failures,
        "seconds": r.seconds,
    })
}

type StageFn = fn(&PipelineConfig, &Sequence, &[u32], &std::path::Path) -> madl::Result<StageReport>;

fn per_frame_stage(common: &Common, stage: StageFn) -> anyhow::Result<(Value, bool)> {
    let cfg = load_config(common)?;
    let seq = Sequence::open(&cfg.paths.sequence)?;
    let frames = seq.select(common.frames);
    anyhow::ensure!(!frames.is_empty(), "no frames selected");
    let r = with_pool(cfg.run.parallelism, || stage(&cfg, &seq, &frames, &cfg.paths.output))??;
    Ok((report_json(&r), r.failures.is_empty()))
}

fn execute(command: Command) -> anyhow::Result<(Value, bool)> {
    match command {
        Command::Detect(c) => per_frame_stage(&c, stage_detect),
        Command::Map(c) => per_frame_stage(&c, stage_map),
        Command::Localize(c) => per_frame_stage(&c, stage_localize),
        Command::Label(c) => per_frame_stage(&c, stage_label),
        Command::Review(c) => {
            let cfg = load_config(&c)?;
            let seq = Sequence::open(&cfg.paths.sequence)?;
            let frames = seq.select(c.frames);
            let (r, m) = with_pool(cfg.run.parallelism, || stage_review(&cfg, &seq, &frames, &cfg.paths.output))??;
            let mut v = report_json(&r);
            v["retained"] = json!(m.retained);
            v["quarantined"] = json!(m.quarantined);
            Ok((v, r.failures.is_empty()))
        }
        Command::Eval(c) => {
            let cfg = load_config(&c)?;
            let seq = Sequence::open(&cfg.paths.sequence)?;
            let s = with_pool(cfg.run.parallelism, || stage_eval(&cfg, &seq, &cfg.paths.output))??;
            let summary = |r: &Option<madl::eval::DatasetReport>| {
                r.as_ref().map(|r| json!({"frames": r.frames.len(), "micro": r.micro, "macro": r.macro_avg}))
            };
            Ok((json!({"stage": "eval", "masks": summary(&s.masks), "curbs": summary(&s.curbs)}), true))
        }
        Command::Synth(c) => {
            let mut cfg = match &c.config {
                Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
                None => PipelineConfig::default(),
            };
            cfg.validate()?;
            let dir = c.out.unwrap_or_else(|| cfg.paths.sequence.clone());
            cfg.paths.sequence = dir.clone();
            with_pool(cfg.run.parallelism, || stage_synth(&cfg, &dir))??;
            Ok((json!({"stage": "synth", "sequence": dir, "frames": cfg.synth.frame_count}), true))
        }
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let m = run_pipeline(&cfg, c.frames)?;
            let v = json!({
                "stage": "run",
                "config_hash": m.config_hash,
                "labeled": m.count(FrameStatus::Labeled),
                "skipped": m.count(FrameStatus::Skipped),
                "quarantined": m.count(FrameStatus::Quarantined),
                "errors": m.errors,
                "timings": m.timings,
            });
            Ok((v, m.errors.is_empty()))
        }
        Command::Config => {
            print!("{}", PipelineConfig::default().to_toml_string()?);
            Ok((Value::Null, true))
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use madl::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::Config(_)) => "config",
        Some(E::Io { .. }) => "io",
        Some(E::MalformedFile { .. } | E::Parse { .. } | E::CalibFormat(_) | E::MapFormat(_)) => "format",
        Some(E::MissingVerdict(_)) => "missing_verdict",
        Some(E::UnmatchedFrames(_)) => "unmatched_frames",
        Some(E::RemoteReview(_)) => "remote_review",
        Some(_) => "stage",
        None => "other",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok((summary, clean)) => {
            if !summary.is_null() {
                println!("{summary}");
            }
            if clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FRAME_FAILURES)
            }
        }
        Err(e) => {
            eprintln!("{}", json!({"status": "error", "kind": error_kind(&e), "message": format!("{e:#}")}));
            ExitCode::FAILURE
        }
    }
}
