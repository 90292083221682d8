use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use intentlab::pipeline::{self, RunManifest, Stage, StageStatus};
use intentlab::Error;

/// Cooperative navigation lab: train MADDPG agents, record their
/// activations, probe them for partner intentions and test them with
/// scripted partners.
///
/// Exit status: 0 success, 2 bad configuration or usage, 3 missing
/// prerequisite stage, 4 partial or foreign output in the run directory,
/// 5 I/O failure, 6 corrupt data, 1 anything else.
#[derive(Parser, Debug)]
#[command(name = "intentlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train agents and write checkpoints plus the learning curve.
    Train(StageArgs),
    /// Record noise-free episodes with every actor's activations.
    Record(StageArgs),
    /// Fit linear probes on recorded activations.
    Probe(StageArgs),
    /// Preference matrix and scripted-partner grid.
    EvalSheldon(StageArgs),
    /// Aggregate finished runs into summary tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ManifestArgs {
    /// Run manifest (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// vanilla, shuffle, shared, ensemble or ensemble:K
    #[arg(long)]
    scheme: Option<String>,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Output root; overrides the manifest.
    #[arg(long, env = "INTENTLAB_OUT")]
    out: Option<PathBuf>,
    /// Manifest override such as `train.batch_size=256`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    manifest: ManifestArgs,
    /// Run only these seeds instead of the manifest's list.
    #[arg(long)]
    seed: Vec<u64>,
    /// Recompute even when outputs exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run manifests to aggregate; one per scheme.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Output root; overrides the manifests.
    #[arg(long, env = "INTENTLAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn overrides(set: &[String]) -> Result<Vec<(String, String)>, Error> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))
        })
        .collect()
}

fn toml_string(s: &str) -> String {
    format!("{s:?}")
}

fn manifest(args: &ManifestArgs, seeds: &[u64]) -> Result<RunManifest, Error> {
    let mut ov = overrides(&args.set)?;
    if let Some(s) = &args.scheme {
        ov.push(("scheme".into(), toml_string(s)));
    }
    if let Some(e) = args.episodes {
        ov.push(("train.episodes".into(), e.to_string()));
    }
    if let Some(out) = &args.out {
        ov.push(("out".into(), toml_string(&out.to_string_lossy())));
    }
    if !seeds.is_empty() {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        ov.push(("seeds".into(), format!("[{}]", list.join(", "))));
    }
    match &args.config {
        Some(path) => RunManifest::load(path, &ov),
        None if args.scheme.is_some() => RunManifest::parse("", &ov),
        None => Err(Error::Config("either --config or --scheme is required".into())),
    }
}

fn run_stage(stage: Stage, args: &StageArgs) -> Result<(), Error> {
    let m = manifest(&args.manifest, &args.seed)?;
    for &seed in &m.seeds {
        let status = pipeline::run_stage_by_name(stage, &m, seed, args.force)?;
        let word = match status {
            StageStatus::Ran => "done",
            StageStatus::UpToDate => "up to date",
        };
        println!("{} {} seed {seed}: {word} ({})", stage.name(), m.scheme, m.run_dir(seed).display());
    }
    Ok(())
}

fn run_report(args: &ReportArgs) -> Result<(), Error> {
    let ov = overrides(&args.set)?;
    let mut manifests = Vec::new();
    for path in &args.config {
        let mut ov = ov.clone();
        if let Some(out) = &args.out {
            ov.push(("out".into(), toml_string(&out.to_string_lossy())));
        }
        manifests.push(RunManifest::load(path, &ov)?);
    }
    let out = manifests[0].out.clone();
    let report = pipeline::report(&manifests, &out)?;
    for s in &report.summaries {
        for (seed, why) in &s.missing {
            eprintln!("{} seed {seed} missing: {why}", s.scheme);
        }
    }
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::NotEnsemble(_) => 2,
        Error::MissingPrerequisite(_) => 3,
        Error::PartialOutput(_) | Error::StaleOutput { .. } => 4,
        Error::Io { .. } => 5,
        Error::Corrupt { .. }
        | Error::RecordVersion { .. }
        | Error::RecordTruncated { .. }
        | Error::RecordDimension(_) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => run_stage(Stage::Train, a),
        Command::Record(a) => run_stage(Stage::Record, a),
        Command::Probe(a) => run_stage(Stage::Probe, a),
        Command::EvalSheldon(a) => run_stage(Stage::Eval, a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
