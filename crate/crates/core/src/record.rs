//! Noise-free evaluation rollouts with per-step activations, and the record
//! file that stores them.
//!
//! File layout:
//!
//! ```text
//! magic          8 bytes   "ILABREC\n"
//! header_len     u64 LE    length of the JSON header in bytes
//! header         JSON      RecordHeader
//! payload        f32 LE    episode after episode
//! ```
//!
//! Each episode is `EPISODE_PREFIX` floats followed by `horizon x agents`
//! blocks of `observation | hidden1 | hidden2 | action` floats in
//! (timestep, agent) order. The prefix holds the episode index, landmark
//! positions (3 x 2), final agent positions (3 x 2), the policy slot that
//! drove each body (3) and the ensemble member used for each body (3).
//! Agents are indexed by body.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{observe_all, ActionVector, Vec2, World, WorldState, ACT_DIM, HORIZON, N_AGENTS, N_LANDMARKS, OBS_DIM};
use crate::error::{Error, Result};
use crate::maddpg::{act_traced, assign_slots, episode_members, TrainedAgents};
use crate::nn::HIDDEN_WIDTH;
use crate::rng::{stream, substream, Stream};

pub const MAGIC: &[u8; 8] = b"ILABREC\n";
pub const FORMAT_VERSION: u32 = 1;
pub const EPISODE_PREFIX: usize = 1 + 2 * N_LANDMARKS + 2 * N_AGENTS + N_AGENTS + N_AGENTS;
pub const STEP_FIELDS: usize = OBS_DIM + 2 * HIDDEN_WIDTH + ACT_DIM;
pub const EPISODE_FLOATS: usize = EPISODE_PREFIX + HORIZON * N_AGENTS * STEP_FIELDS;

const OFF_H1: usize = OBS_DIM;
const OFF_H2: usize = OBS_DIM + HIDDEN_WIDTH;
const OFF_ACT: usize = OBS_DIM + 2 * HIDDEN_WIDTH;

/// Where probe features come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Observation,
    Hidden1,
    Hidden2,
    Action,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 4] = [
        FeatureSource::Observation,
        FeatureSource::Hidden1,
        FeatureSource::Hidden2,
        FeatureSource::Action,
    ];

    pub fn dim(self) -> usize {
        match self {
            FeatureSource::Observation => OBS_DIM,
            FeatureSource::Hidden1 | FeatureSource::Hidden2 => HIDDEN_WIDTH,
            FeatureSource::Action => ACT_DIM,
        }
    }

    fn offset(self) -> usize {
        match self {
            FeatureSource::Observation => 0,
            FeatureSource::Hidden1 => OFF_H1,
            FeatureSource::Hidden2 => OFF_H2,
            FeatureSource::Action => OFF_ACT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::Observation => "observation",
            FeatureSource::Hidden1 => "hidden1",
            FeatureSource::Hidden2 => "hidden2",
            FeatureSource::Action => "action",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub observation: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub action: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        FeatureDims {
            observation: OBS_DIM,
            hidden1: HIDDEN_WIDTH,
            hidden2: HIDDEN_WIDTH,
            action: ACT_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub format_version: u32,
    pub agent_count: usize,
    pub landmark_count: usize,
    pub horizon: usize,
    pub dims: FeatureDims,
    pub episode_prefix: usize,
    pub scheme: String,
    pub seed: u64,
    pub episode_count: usize,
    pub manifest_hash: String,
}

impl RecordHeader {
    pub fn new(scheme: &str, seed: u64, episode_count: usize, manifest_hash: &str) -> Self {
        RecordHeader {
            format_version: FORMAT_VERSION,
            agent_count: N_AGENTS,
            landmark_count: N_LANDMARKS,
            horizon: HORIZON,
            dims: FeatureDims::default(),
            episode_prefix: EPISODE_PREFIX,
            scheme: scheme.to_string(),
            seed,
            episode_count,
            manifest_hash: manifest_hash.to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::RecordVersion {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let fixed = [
            ("agent_count", self.agent_count, N_AGENTS),
            ("landmark_count", self.landmark_count, N_LANDMARKS),
            ("horizon", self.horizon, HORIZON),
            ("episode_prefix", self.episode_prefix, EPISODE_PREFIX),
        ];
        for (name, found, expected) in fixed {
            if found != expected {
                return Err(Error::RecordDimension(format!("{name} is {found}, expected {expected}")));
            }
        }
        if self.dims != FeatureDims::default() {
            return Err(Error::RecordDimension(format!("feature dims {:?}", self.dims)));
        }
        Ok(())
    }
}

/// One recorded episode. Per-step data lives in a flat buffer; use the
/// accessors.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode_index: u32,
    pub landmarks: [[f32; 2]; N_LANDMARKS],
    pub final_positions: [[f32; 2]; N_AGENTS],
    /// Policy slot that drove each body.
    pub controllers: [u8; N_AGENTS],
    /// Ensemble member that drove each body.
    pub members: [u8; N_AGENTS],
    steps: Vec<f32>,
}

impl EpisodeRecord {
    #[inline]
    fn block(&self, t: usize, agent: usize) -> &[f32] {
        let at = (t * N_AGENTS + agent) * STEP_FIELDS;
        &self.steps[at..at + STEP_FIELDS]
    }

    pub fn features(&self, t: usize, agent: usize, source: FeatureSource) -> &[f32] {
        let off = source.offset();
        &self.block(t, agent)[off..off + source.dim()]
    }

    pub fn observation(&self, t: usize, agent: usize) -> &[f32] {
        self.features(t, agent, FeatureSource::Observation)
    }

    pub fn hidden1(&self, t: usize, agent: usize) -> &[f32] {
        self.features(t, agent, FeatureSource::Hidden1)
    }

    pub fn hidden2(&self, t: usize, agent: usize) -> &[f32] {
        self.features(t, agent, FeatureSource::Hidden2)
    }

    pub fn action(&self, t: usize, agent: usize) -> &[f32] {
        self.features(t, agent, FeatureSource::Action)
    }

    /// Index of the landmark nearest to `agent`'s final position, lowest
    /// index on ties.
    pub fn final_landmark(&self, agent: usize) -> usize {
        let [px, py] = self.final_positions[agent].map(f64::from);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, [lx, ly]) in self.landmarks.iter().enumerate() {
            let d = ((f64::from(*lx) - px).powi(2) + (f64::from(*ly) - py).powi(2)).sqrt();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut put = |v: f32| out.extend_from_slice(&v.to_le_bytes());
        put(self.episode_index as f32);
        self.landmarks.iter().flatten().for_each(|&v| put(v));
        self.final_positions.iter().flatten().for_each(|&v| put(v));
        self.controllers.iter().for_each(|&v| put(f32::from(v)));
        self.members.iter().for_each(|&v| put(f32::from(v)));
        for &v in &self.steps {
            put(v);
        }
    }

    fn decode(floats: &[f32]) -> std::result::Result<Self, String> {
        let (prefix, steps) = floats.split_at(EPISODE_PREFIX);
        let small = |v: f32| -> std::result::Result<u8, String> {
            if (0.0..256.0).contains(&v) && v.fract() == 0.0 {
                Ok(v as u8)
            } else {
                Err(format!("invalid index value {v}"))
            }
        };
        let pair = |i: usize| [prefix[i], prefix[i + 1]];
        let rec = EpisodeRecord {
            episode_index: prefix[0] as u32,
            landmarks: std::array::from_fn(|i| pair(1 + 2 * i)),
            final_positions: std::array::from_fn(|i| pair(7 + 2 * i)),
            controllers: [small(prefix[13])?, small(prefix[14])?, small(prefix[15])?],
            members: [small(prefix[16])?, small(prefix[17])?, small(prefix[18])?],
            steps: steps.to_vec(),
        };
        if !floats.iter().all(|v| v.is_finite()) {
            return Err("non-finite value".into());
        }
        for t in 0..HORIZON {
            for k in 0..N_AGENTS {
                if rec.hidden1(t, k).iter().chain(rec.hidden2(t, k)).any(|&h| h < 0.0) {
                    return Err(format!("negative hidden activation at step {t}, agent {k}"));
                }
            }
        }
        Ok(rec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordFile {
    pub header: RecordHeader,
    pub episodes: Vec<EpisodeRecord>,
}

impl RecordFile {
    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.episodes.len() * EPISODE_FLOATS * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for e in &self.episodes {
            e.encode_into(&mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing record magic".into()));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header_bytes = bytes
            .get(16..16usize.saturating_add(header_len))
            .ok_or_else(|| corrupt("header extends past end of file".into()))?;
        let header: RecordHeader =
            serde_json::from_slice(header_bytes).map_err(|e| corrupt(format!("header: {e}")))?;
        header.validate()?;

        let payload = &bytes[16 + header_len..];
        let expected = (header.episode_count * EPISODE_FLOATS * 4) as u64;
        if (payload.len() as u64) < expected {
            return Err(Error::RecordTruncated {
                expected,
                found: payload.len() as u64,
            });
        }
        if payload.len() as u64 > expected {
            return Err(corrupt(format!(
                "{} trailing payload bytes",
                payload.len() as u64 - expected
            )));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let episodes = floats
            .chunks_exact(EPISODE_FLOATS)
            .map(EpisodeRecord::decode)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(corrupt)?;
        Ok(RecordFile { header, episodes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode()).map_err(|e| Error::io(path, e))?;
        f.sync_all().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        RecordFile::decode(&bytes, path)
    }
}

/// Runs `episodes` noise-free episodes with the run's slot assignment rule
/// and captures what every actor saw, computed and did.
pub fn record(agents: &TrainedAgents, episodes: usize, seed: u64, manifest_hash: &str) -> Result<RecordFile> {
    let world = World::new(agents.config.physics);
    let scheme = agents.scheme();
    let mut env_rng = stream(seed, Stream::Record);
    let mut scheme_rng = substream(seed, Stream::Record, 1);
    let mut out = Vec::with_capacity(episodes);

    for episode in 0..episodes {
        let slots = assign_slots(scheme, episode, &mut scheme_rng);
        let members = episode_members(scheme, episode, &mut scheme_rng);
        let mut controllers = [0u8; N_AGENTS];
        let mut body_members = [0u8; N_AGENTS];
        for s in 0..N_AGENTS {
            controllers[slots[s]] = s as u8;
            body_members[slots[s]] = members[s] as u8;
        }

        let mut state: WorldState = world.reset(&mut env_rng);
        let landmarks = state.landmarks.map(|l| [l.x as f32, l.y as f32]);
        let mut steps = Vec::with_capacity(HORIZON * N_AGENTS * STEP_FIELDS);
        for _ in 0..HORIZON {
            let obs = observe_all(&state);
            let mut actions = [ActionVector::IDLE; N_AGENTS];
            for body in 0..N_AGENTS {
                let slot = controllers[body] as usize;
                let actor = agents.actor(slot, body_members[body] as usize);
                let (a, trace) = act_traced(actor, &obs[body]);
                actions[body] = a;
                steps.extend(obs[body].0.iter().map(|&v| v as f32));
                steps.extend(trace.h1.iter().map(|&v| v as f32));
                steps.extend(trace.h2.iter().map(|&v| v as f32));
                steps.extend(a.0.iter().map(|&v| v as f32));
            }
            state = world.step(&state, &actions)?.0;
        }
        let final_positions = state.agents.map(|b| {
            let Vec2 { x, y } = b.position;
            [x as f32, y as f32]
        });
        out.push(EpisodeRecord {
            episode_index: episode as u32,
            landmarks,
            final_positions,
            controllers,
            members: body_members,
            steps,
        });
    }

    Ok(RecordFile {
        header: RecordHeader::new(&scheme.to_string(), seed, episodes, manifest_hash),
        episodes: out,
    })
}
