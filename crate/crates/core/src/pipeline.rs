//! Run manifests and the staged train / record / probe / evaluate / report
//! pipeline. Every stage writes into a directory owned by one (scheme, seed)
//! pair and leaves a marker naming the manifest hash and the digests of its
//! outputs, so reruns are skipped and stale or half-written results are
//! caught.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{
    preference_matrix, sheldon_grid, summarize, summary_tsv, CoverageCriterion, PreferenceMatrix, RunResult,
    SchemeSummary, SheldonGrid, Stat, DEFAULT_EVAL_EPISODES,
};
use crate::maddpg::{train_with, Scheme, TrainConfig, TrainedAgents};
use crate::probe::{accuracy_curves, AccuracyGrid, ProbeConfig};
use crate::record::{record, FeatureSource, RecordFile};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordSettings {
    pub episodes: usize,
}

impl Default for RecordSettings {
    fn default() -> Self {
        RecordSettings { episodes: 4000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub episodes: usize,
    pub radius: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            episodes: DEFAULT_EVAL_EPISODES,
            radius: CoverageCriterion::default().radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scheme: Scheme,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Training settings; `scheme` and `seed` inside are taken from the
    /// manifest and the run.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub record: RecordSettings,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// The part of a manifest that determines results. Seeds and the output
/// root are left out so that seeds can run separately and reruns can go to
/// another directory under the same hash.
#[derive(Serialize)]
struct Fingerprint<'a> {
    scheme: String,
    train: &'a TrainConfig,
    record: &'a RecordSettings,
    probe: &'a ProbeConfig,
    eval: &'a EvalSettings,
}

impl RunManifest {
    pub fn new(scheme: Scheme) -> Self {
        RunManifest {
            scheme,
            seeds: default_seeds(),
            train: TrainConfig::default(),
            record: RecordSettings::default(),
            probe: ProbeConfig::default(),
            eval: EvalSettings::default(),
            out: default_out(),
        }
    }

    /// Parses TOML text, then applies dotted `key=value` overrides such as
    /// `train.batch_size=256`. Values are read as TOML, falling back to a
    /// plain string.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, value) in overrides {
            set_dotted(&mut table, key, parse_value(value))?;
        }
        let mut m: RunManifest = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        m.train.scheme = m.scheme;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunManifest::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("manifest lists no seeds".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("manifest seeds must be distinct".into()));
        }
        if self.record.episodes == 0 || self.eval.episodes == 0 {
            return Err(Error::Config("record and eval episode counts must be positive".into()));
        }
        CoverageCriterion::new(self.eval.radius)?;
        if !(self.probe.l2 >= 0.0 && self.probe.tolerance > 0.0) {
            return Err(Error::Config("probe l2 must be non-negative and tolerance positive".into()));
        }
        self.run_config(self.seeds[0]).validate()
    }

    pub fn hash(&self) -> String {
        let mut train = self.train.clone();
        train.scheme = self.scheme;
        train.seed = 0;
        let fp = Fingerprint {
            scheme: self.scheme.to_string(),
            train: &train,
            record: &self.record,
            probe: &self.probe,
            eval: &self.eval,
        };
        let json = serde_json::to_vec(&fp).expect("manifest serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn run_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            scheme: self.scheme,
            seed,
            ..self.train.clone()
        }
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out.join(self.scheme.to_string().replace(':', "-")).join(format!("seed-{seed}"))
    }

    pub fn criterion(&self) -> CoverageCriterion {
        CoverageCriterion {
            radius: self.eval.radius,
        }
    }

    /// `#` comment lines that tie a table to its run.
    pub fn provenance(&self, seed: u64) -> String {
        format!("# manifest {}\n# scheme {}\n# seed {seed}\n", self.hash(), self.scheme)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| Error::Config(format!("bad key {key:?}")))?;
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key:?}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Train,
    Record,
    Probe,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Train, Stage::Record, Stage::Probe, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::Record => "record",
            Stage::Probe => "probe",
            Stage::Eval => "eval-sheldon",
        }
    }

    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Train => None,
            Stage::Record => Some(Stage::Train),
            Stage::Probe => Some(Stage::Record),
            Stage::Eval => Some(Stage::Train),
        }
    }

    /// Files the stage owns, relative to the run directory.
    pub fn outputs(self, scheme: Scheme) -> Vec<String> {
        match self {
            Stage::Train => {
                let mut v = vec![METADATA.to_string(), LEARNING_CURVE.to_string()];
                for i in 0..crate::maddpg::learner_count(scheme) {
                    v.push(format!("{CHECKPOINTS}/learner{i}_actor.bin"));
                    v.push(format!("{CHECKPOINTS}/learner{i}_critic.bin"));
                }
                v
            }
            Stage::Record => vec![RECORD.to_string()],
            Stage::Probe => vec![PROBE_TABLE.to_string()],
            Stage::Eval => vec![PREFERENCES.to_string(), SHELDON_GRID.to_string()],
        }
    }

    fn marker(self) -> String {
        format!(".{}.done", self.name())
    }

    fn dependents(self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| {
                let mut p = s.prerequisite();
                while let Some(q) = p {
                    if q == self {
                        return true;
                    }
                    p = q.prerequisite();
                }
                false
            })
            .collect()
    }
}

pub const CHECKPOINTS: &str = "checkpoints";
pub const METADATA: &str = "metadata.toml";
pub const LEARNING_CURVE: &str = "learning_curve.tsv";
pub const RECORD: &str = "record.bin";
pub const PROBE_TABLE: &str = "probe_accuracy.tsv";
pub const PREFERENCES: &str = "preferences.tsv";
pub const SHELDON_GRID: &str = "sheldon_grid.tsv";
pub const REPORT_DIR: &str = "report";
pub const SUMMARY: &str = "summary.tsv";
pub const PROBE_SUMMARY: &str = "probe_summary.tsv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Marker {
    manifest: String,
    scheme: String,
    seed: u64,
    /// Output path and its sha256.
    outputs: Vec<(String, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    /// Outputs from an earlier run with the same manifest were kept.
    UpToDate,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_marker(dir: &Path, stage: Stage) -> Result<Option<Marker>> {
    let path = dir.join(stage.marker());
    match fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| Error::Corrupt {
            path,
            reason: e.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Whether the stage's marker matches the manifest and its outputs are
/// intact.
fn check_complete(m: &RunManifest, seed: u64, stage: Stage) -> Result<Option<Marker>> {
    let dir = m.run_dir(seed);
    let Some(marker) = read_marker(&dir, stage)? else {
        return Ok(None);
    };
    let hash = m.hash();
    if marker.manifest != hash {
        return Err(Error::StaleOutput {
            path: dir.join(stage.marker()),
            found: marker.manifest,
            expected: hash,
        });
    }
    for (name, digest) in &marker.outputs {
        let path = dir.join(name);
        if !path.exists() || sha256_file(&path)? != *digest {
            return Err(Error::PartialOutput(path));
        }
    }
    Ok(Some(marker))
}

/// Ensures the prerequisite of `stage` is complete for this manifest.
pub fn require(m: &RunManifest, seed: u64, stage: Stage) -> Result<()> {
    if let Some(pre) = stage.prerequisite() {
        if check_complete(m, seed, pre)?.is_none() {
            return Err(Error::MissingPrerequisite(format!(
                "{} stage has not completed in {} (run `{}` first)",
                pre.name(),
                m.run_dir(seed).display(),
                pre.name()
            )));
        }
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn remove_if_exists(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

/// Shared bookkeeping around a stage body: prerequisite check, skip when
/// complete, refusal to clobber foreign or partial outputs without `force`,
/// and the completion marker.
fn run_stage(
    m: &RunManifest,
    seed: u64,
    stage: Stage,
    force: bool,
    body: impl FnOnce(&Path) -> Result<()>,
) -> Result<StageStatus> {
    m.validate()?;
    require(m, seed, stage)?;
    let dir = m.run_dir(seed);
    let outputs = stage.outputs(m.scheme);
    if !force {
        if check_complete(m, seed, stage)?.is_some() {
            info!("{} for {} seed {seed} is up to date", stage.name(), m.scheme);
            return Ok(StageStatus::UpToDate);
        }
        if let Some(existing) = outputs.iter().map(|o| dir.join(o)).find(|p| p.exists()) {
            return Err(Error::PartialOutput(existing));
        }
    }

    for s in std::iter::once(stage).chain(stage.dependents()) {
        remove_if_exists(&dir.join(s.marker()))?;
    }
    for o in &outputs {
        remove_if_exists(&dir.join(o))?;
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    info!("{} for {} seed {seed} in {}", stage.name(), m.scheme, dir.display());
    body(&dir)?;

    let mut digests = Vec::with_capacity(outputs.len());
    for o in outputs {
        let path = dir.join(&o);
        if !path.exists() {
            return Err(Error::PartialOutput(path));
        }
        digests.push((o, sha256_file(&path)?));
    }
    let marker = Marker {
        manifest: m.hash(),
        scheme: m.scheme.to_string(),
        seed,
        outputs: digests,
    };
    write_atomic(
        &dir.join(stage.marker()),
        serde_json::to_string_pretty(&marker).expect("marker serializes").as_bytes(),
    )?;
    Ok(StageStatus::Ran)
}

#[derive(Serialize)]
struct Metadata<'a> {
    manifest: String,
    scheme: String,
    seed: u64,
    updates: usize,
    train: &'a TrainConfig,
}

pub fn train_stage(m: &RunManifest, seed: u64, force: bool) -> Result<StageStatus> {
    run_stage(m, seed, Stage::Train, force, |dir| {
        let cfg = m.run_config(seed);
        let episodes = cfg.episodes;
        let mut window = 0.0;
        let outcome = train_with(&cfg, |e, r| {
            window += r;
            if (e + 1) % 1000 == 0 {
                info!("{} seed {seed}: episode {}/{episodes}, mean reward {:.2}", m.scheme, e + 1, window / 1000.0);
                window = 0.0;
            }
        })?;

        let ckpt = dir.join(CHECKPOINTS);
        outcome.agents.save(&ckpt)?;
        let meta = Metadata {
            manifest: m.hash(),
            scheme: m.scheme.to_string(),
            seed,
            updates: outcome.updates,
            train: &cfg,
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&dir.join(METADATA), text.as_bytes())?;

        let mut curve = m.provenance(seed);
        curve.push_str("episode\treward\n");
        for (i, r) in outcome.episode_rewards.iter().enumerate() {
            let _ = writeln!(curve, "{i}\t{r:.6}");
        }
        write_atomic(&dir.join(LEARNING_CURVE), curve.as_bytes())
    })
}

fn load_agents(m: &RunManifest, seed: u64) -> Result<TrainedAgents> {
    TrainedAgents::load(&m.run_dir(seed).join(CHECKPOINTS), m.run_config(seed))
}

pub fn record_stage(m: &RunManifest, seed: u64, force: bool) -> Result<StageStatus> {
    run_stage(m, seed, Stage::Record, force, |dir| {
        let agents = load_agents(m, seed)?;
        let file = record(&agents, m.record.episodes, seed, &m.hash())?;
        write_atomic(&dir.join(RECORD), &file.encode())
    })
}

pub fn probe_stage(m: &RunManifest, seed: u64, force: bool) -> Result<StageStatus> {
    run_stage(m, seed, Stage::Probe, force, |dir| {
        let file = RecordFile::load(&dir.join(RECORD))?;
        if file.header.manifest_hash != m.hash() {
            return Err(Error::StaleOutput {
                path: dir.join(RECORD),
                found: file.header.manifest_hash,
                expected: m.hash(),
            });
        }
        let grid = accuracy_curves(&file.episodes, seed, &m.probe)?;
        write_atomic(&dir.join(PROBE_TABLE), grid.to_tsv(&m.provenance(seed)).as_bytes())
    })
}

pub fn eval_stage(m: &RunManifest, seed: u64, force: bool) -> Result<StageStatus> {
    run_stage(m, seed, Stage::Eval, force, |dir| {
        let agents = load_agents(m, seed)?;
        let crit = m.criterion();
        let prefs = preference_matrix(&agents, m.eval.episodes, &crit, seed)?;
        if prefs.is_empty() {
            log::warn!("{} seed {seed}: no evaluation episode covered all landmarks", m.scheme);
        }
        write_atomic(&dir.join(PREFERENCES), prefs.to_tsv(&m.provenance(seed)).as_bytes())?;
        let grid = sheldon_grid(&agents, &crit, m.eval.episodes, seed)?;
        write_atomic(&dir.join(SHELDON_GRID), grid.to_tsv(&m.provenance(seed)).as_bytes())
    })
}

pub fn run_stage_by_name(stage: Stage, m: &RunManifest, seed: u64, force: bool) -> Result<StageStatus> {
    match stage {
        Stage::Train => train_stage(m, seed, force),
        Stage::Record => record_stage(m, seed, force),
        Stage::Probe => probe_stage(m, seed, force),
        Stage::Eval => eval_stage(m, seed, force),
    }
}

/// Mean reward per episode of a finished training run.
pub fn load_learning_curve(m: &RunManifest, seed: u64) -> Result<Vec<f64>> {
    check_or_missing(m, seed, Stage::Train)?;
    let path = m.run_dir(seed).join(LEARNING_CURVE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            l.split('\t')
                .nth(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Corrupt {
                    path: path.clone(),
                    reason: format!("bad learning curve row {l:?}"),
                })
        })
        .collect()
}

pub fn load_accuracy(m: &RunManifest, seed: u64) -> Result<AccuracyGrid> {
    check_or_missing(m, seed, Stage::Probe)?;
    let path = m.run_dir(seed).join(PROBE_TABLE);
    AccuracyGrid::from_tsv(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)
}

pub fn load_eval(m: &RunManifest, seed: u64) -> Result<(PreferenceMatrix, SheldonGrid)> {
    check_or_missing(m, seed, Stage::Eval)?;
    let dir = m.run_dir(seed);
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    };
    Ok((
        PreferenceMatrix::from_tsv(&read(PREFERENCES)?)?,
        SheldonGrid::from_tsv(&read(SHELDON_GRID)?)?,
    ))
}

fn check_or_missing(m: &RunManifest, seed: u64, stage: Stage) -> Result<()> {
    match check_complete(m, seed, stage)? {
        Some(_) => Ok(()),
        None => Err(Error::MissingPrerequisite(format!(
            "{} stage has not completed in {}",
            stage.name(),
            m.run_dir(seed).display()
        ))),
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub summaries: Vec<SchemeSummary>,
    pub files: Vec<PathBuf>,
}

/// Aggregates every seed of every manifest into `out/report/`. Runs that
/// are missing or incomplete are listed in the tables instead of failing.
pub fn report(manifests: &[RunManifest], out: &Path) -> Result<Report> {
    let mut header = String::new();
    for m in manifests {
        m.validate()?;
        let _ = writeln!(header, "# manifest {} scheme {} seeds {:?}", m.hash(), m.scheme, m.seeds);
    }

    let mut summaries = Vec::new();
    let mut probe_rows = String::from(&header);
    probe_rows.push_str("scheme\tsource\ttarget\ttimestep\tmean\tstd\tn\n");
    for m in manifests {
        let mut runs = Vec::new();
        let mut missing = Vec::new();
        let mut grids = Vec::new();
        for &seed in &m.seeds {
            match load_eval(m, seed) {
                Ok((prefs, grid)) => runs.push(RunResult {
                    seed,
                    trio_success: prefs.qualifying_fraction(),
                    grid,
                }),
                Err(e) => missing.push((seed, e.to_string())),
            }
            if let Ok(g) = load_accuracy(m, seed) {
                grids.push(g);
            }
        }
        summaries.push(summarize(&m.scheme.to_string(), &runs, missing));

        for source in FeatureSource::ALL {
            for (relation, own) in [("self", true), ("other", false)] {
                for t in 0..crate::env::HORIZON {
                    let vals: Vec<f64> = grids
                        .iter()
                        .map(|g| if own { g.mean_self(source, t..=t) } else { g.mean_other(source, t..=t) })
                        .collect();
                    if let Some(Stat { mean, std, n }) = Stat::of(&vals) {
                        let _ = writeln!(
                            probe_rows,
                            "{}\t{}\t{relation}\t{t}\t{mean:.6}\t{std:.6}\t{n}",
                            m.scheme,
                            source.name()
                        );
                    }
                }
            }
        }
    }

    let dir = out.join(REPORT_DIR);
    let summary_path = dir.join(SUMMARY);
    let probe_path = dir.join(PROBE_SUMMARY);
    write_atomic(&summary_path, summary_tsv(&summaries, &header).as_bytes())?;
    write_atomic(&probe_path, probe_rows.as_bytes())?;
    Ok(Report {
        summaries,
        files: vec![summary_path, probe_path],
    })
}
