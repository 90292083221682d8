//! Behavioural metrics: coverage success, landmark preferences, the Sheldon
//! generalization grid and cross-seed summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{distance_matrix, observe, ActionVector, World, WorldState, ACT_DIM, HORIZON, N_AGENTS, N_LANDMARKS, OBS_DIM};
use crate::error::{Error, Result};
use crate::maddpg::{assign_slots, episode_members, Scheme, TrainedAgents};
use crate::nn::Matrix;
use crate::rng::{substream, Stream};
use crate::scripted::SheldonPolicy;

pub const DEFAULT_EVAL_EPISODES: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCriterion {
    pub radius: f64,
}

impl CoverageCriterion {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("coverage radius must be positive, got {radius}")));
        }
        Ok(CoverageCriterion { radius })
    }
}

impl Default for CoverageCriterion {
    fn default() -> Self {
        CoverageCriterion { radius: 0.3 }
    }
}

/// Landmark to covering agent, if every landmark's nearest agent lies within
/// the radius and no agent is nearest to two landmarks.
pub fn coverage_assignment(state: &WorldState, criterion: &CoverageCriterion) -> Option<[usize; N_LANDMARKS]> {
    let d = distance_matrix(state);
    let mut owner = [0usize; N_LANDMARKS];
    let mut taken = [false; N_AGENTS];
    for l in 0..N_LANDMARKS {
        let mut best = 0;
        for a in 1..N_AGENTS {
            if d[l][a] < d[l][best] {
                best = a;
            }
        }
        if d[l][best] > criterion.radius || taken[best] {
            return None;
        }
        taken[best] = true;
        owner[l] = best;
    }
    Some(owner)
}

pub fn episode_success(state: &WorldState, criterion: &CoverageCriterion) -> bool {
    coverage_assignment(state, criterion).is_some()
}

/// Who drives a body during an evaluation episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Controller {
    /// Actor of the given learner, noise free.
    Learner(usize),
    Sheldon(SheldonPolicy),
}

/// Plays one noise-free episode per entry of `setups` (controllers indexed
/// by body) and returns the final states. Initial states are drawn from
/// `rng` in order. Learner actors are evaluated in batches across episodes.
pub fn run_episodes<R: Rng + ?Sized>(
    agents: &TrainedAgents,
    setups: &[[Controller; N_AGENTS]],
    rng: &mut R,
) -> Result<Vec<WorldState>> {
    let world = World::new(agents.config.physics);
    let mut states: Vec<WorldState> = setups.iter().map(|_| world.reset(rng)).collect();

    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (e, setup) in setups.iter().enumerate() {
        for (body, c) in setup.iter().enumerate() {
            if let Controller::Learner(i) = *c {
                if i >= agents.learners.len() {
                    return Err(Error::Config(format!("learner {i} does not exist")));
                }
                groups.entry(i).or_default().push((e, body));
            }
        }
    }

    let mut actions = vec![[ActionVector::IDLE; N_AGENTS]; setups.len()];
    for _ in 0..HORIZON {
        for (&learner, rows) in &groups {
            let mut input = Matrix::zeros(rows.len(), OBS_DIM);
            for (r, &(e, body)) in rows.iter().enumerate() {
                input.row_mut(r).copy_from_slice(&observe(&states[e], body)?.0);
            }
            let out = agents.learners[learner].actor.online.predict_batch(&input)?;
            for (r, &(e, body)) in rows.iter().enumerate() {
                let mut a = [0.0; ACT_DIM];
                a.copy_from_slice(out.row(r));
                actions[e][body] = ActionVector::clamped(a);
            }
        }
        for (e, setup) in setups.iter().enumerate() {
            for (body, c) in setup.iter().enumerate() {
                if let Controller::Sheldon(p) = c {
                    actions[e][body] = p.act(&observe(&states[e], body)?);
                }
            }
            states[e] = world.step(&states[e], &actions[e])?.0;
        }
    }
    Ok(states)
}

/// How often each policy slot ended up covering each landmark, over the
/// episodes where all landmarks were covered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceMatrix {
    /// `counts[slot][landmark]`
    pub counts: [[usize; N_LANDMARKS]; N_AGENTS],
    pub successes: usize,
    pub episodes: usize,
}

impl PreferenceMatrix {
    /// Trained-trio success rate.
    pub fn qualifying_fraction(&self) -> f64 {
        if self.episodes == 0 {
            return 0.0;
        }
        self.successes as f64 / self.episodes as f64
    }

    pub fn is_empty(&self) -> bool {
        self.successes == 0
    }

    /// Row percentages, or `None` when no episode qualified.
    pub fn percentages(&self) -> Option<[[f64; N_LANDMARKS]; N_AGENTS]> {
        if self.is_empty() {
            return None;
        }
        Some(self.counts.map(|row| row.map(|c| 100.0 * c as f64 / self.successes as f64)))
    }

    /// Each row's maximum is at least `threshold` percent and the maxima sit
    /// on distinct landmarks.
    pub fn is_concentrated(&self, threshold: f64) -> bool {
        let Some(p) = self.percentages() else {
            return false;
        };
        let mut seen = [false; N_LANDMARKS];
        for row in p {
            let (arg, max) = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            if max < threshold || std::mem::replace(&mut seen[arg], true) {
                return false;
            }
        }
        true
    }

    pub fn to_tsv(&self, provenance: &str) -> String {
        let mut out = String::from(provenance);
        let _ = writeln!(out, "# qualifying {} of {} episodes", self.successes, self.episodes);
        out.push_str("agent\tlandmark\tcount\tpercent\n");
        let p = self.percentages();
        for s in 0..N_AGENTS {
            for l in 0..N_LANDMARKS {
                let pct = p.map_or("empty".to_string(), |p| format!("{:.3}", p[s][l]));
                let _ = writeln!(out, "{s}\t{l}\t{}\t{pct}", self.counts[s][l]);
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("malformed preference table: {what}"));
        let totals = text
            .lines()
            .find_map(|l| l.strip_prefix("# qualifying "))
            .ok_or_else(|| bad("no qualifying line"))?;
        let (succ, eps) = totals.split_once(" of ").ok_or_else(|| bad(totals))?;
        let mut m = PreferenceMatrix {
            counts: [[0; N_LANDMARKS]; N_AGENTS],
            successes: succ.trim().parse().map_err(|_| bad(totals))?,
            episodes: eps.trim_end_matches(" episodes").parse().map_err(|_| bad(totals))?,
        };
        let mut n = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let field = |i: usize| f.get(i).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| bad(line));
            let (s, l) = (field(0)?, field(1)?);
            if s >= N_AGENTS || l >= N_LANDMARKS {
                return Err(bad(line));
            }
            m.counts[s][l] = field(2)?;
            n += 1;
        }
        if n != N_AGENTS * N_LANDMARKS {
            return Err(bad("wrong row count"));
        }
        Ok(m)
    }
}

/// Runs `episodes` evaluation episodes with the scheme's own slot and member
/// assignment and tallies landmark preferences per slot.
pub fn preference_matrix(
    agents: &TrainedAgents,
    episodes: usize,
    criterion: &CoverageCriterion,
    seed: u64,
) -> Result<PreferenceMatrix> {
    let scheme = agents.scheme();
    let mut assign_rng = substream(seed, Stream::Evaluation, 0);
    let mut env_rng = substream(seed, Stream::Evaluation, 1);
    let mut slots = Vec::with_capacity(episodes);
    let setups: Vec<[Controller; N_AGENTS]> = (0..episodes)
        .map(|e| {
            let perm = assign_slots(scheme, e, &mut assign_rng);
            let members = episode_members(scheme, e, &mut assign_rng);
            let mut setup = [Controller::Learner(0); N_AGENTS];
            for s in 0..N_AGENTS {
                setup[perm[s]] = Controller::Learner(agents.learner_index(s, members[s]));
            }
            slots.push(perm);
            setup
        })
        .collect();
    let finals = run_episodes(agents, &setups, &mut env_rng)?;

    let mut m = PreferenceMatrix {
        counts: [[0; N_LANDMARKS]; N_AGENTS],
        successes: 0,
        episodes,
    };
    for (state, perm) in finals.iter().zip(&slots) {
        if let Some(owner) = coverage_assignment(state, criterion) {
            m.successes += 1;
            for (l, &body) in owner.iter().enumerate() {
                let slot = perm.iter().position(|&b| b == body).expect("permutation");
                m.counts[slot][l] += 1;
            }
        }
    }
    Ok(m)
}

/// Success rate with one trained agent and two Sheldons:
/// `success[slot][free landmark]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheldonGrid {
    pub success: [[f64; N_LANDMARKS]; N_AGENTS],
}

impl SheldonGrid {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.success.iter().flatten().copied()
    }

    pub fn min(&self) -> f64 {
        self.values().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn gap(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn mean(&self) -> f64 {
        self.values().sum::<f64>() / (N_AGENTS * N_LANDMARKS) as f64
    }

    pub fn to_tsv(&self, provenance: &str) -> String {
        let mut out = String::from(provenance);
        out.push_str("agent\tfree_landmark\tsuccess\n");
        for k in 0..N_AGENTS {
            for l in 0..N_LANDMARKS {
                let _ = writeln!(out, "{k}\t{l}\t{:.6}", self.success[k][l]);
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut success = [[f64::NAN; N_LANDMARKS]; N_AGENTS];
        let mut n = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let bad = || Error::Config(format!("malformed Sheldon grid row {line:?}"));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let k: usize = f[0].parse().map_err(|_| bad())?;
            let l: usize = f[1].parse().map_err(|_| bad())?;
            if k >= N_AGENTS || l >= N_LANDMARKS {
                return Err(bad());
            }
            success[k][l] = f[2].parse().map_err(|_| bad())?;
            n += 1;
        }
        if n != N_AGENTS * N_LANDMARKS {
            return Err(Error::Config(format!("Sheldon grid has {n} rows")));
        }
        Ok(SheldonGrid { success })
    }
}

/// Controllers for one grid cell: `focus` drives body `slot`, the remaining
/// bodies (in order) are Sheldons on the remaining landmarks (in order).
pub fn sheldon_setup(slot: usize, free_landmark: usize, focus: Controller) -> Result<[Controller; N_AGENTS]> {
    if slot >= N_AGENTS {
        return Err(Error::AgentIndex(slot));
    }
    if free_landmark >= N_LANDMARKS {
        return Err(Error::Config(format!("landmark {free_landmark} out of range")));
    }
    let mut claimed = (0..N_LANDMARKS).filter(|&l| l != free_landmark);
    let mut setup = [focus; N_AGENTS];
    for (body, c) in setup.iter_mut().enumerate() {
        if body != slot {
            *c = Controller::Sheldon(SheldonPolicy::new(claimed.next().expect("two claimed landmarks"))?);
        }
    }
    Ok(setup)
}

/// Evaluates all 9 (slot, free landmark) combinations. Under ensembles the
/// trained member is drawn per episode.
pub fn sheldon_grid(
    agents: &TrainedAgents,
    criterion: &CoverageCriterion,
    episodes: usize,
    seed: u64,
) -> Result<SheldonGrid> {
    sheldon_grid_with(agents, criterion, episodes, seed, |agents, slot, _free, rng| {
        let member = match agents.scheme() {
            Scheme::Ensemble { k } => rng.gen_range(0..k),
            _ => 0,
        };
        Controller::Learner(agents.learner_index(slot, member))
    })
}

/// Grid evaluation with a custom controller in the focus position.
pub fn sheldon_grid_with(
    agents: &TrainedAgents,
    criterion: &CoverageCriterion,
    episodes: usize,
    seed: u64,
    mut focus: impl FnMut(&TrainedAgents, usize, usize, &mut rand_chacha::ChaCha8Rng) -> Controller,
) -> Result<SheldonGrid> {
    let mut success = [[0.0; N_LANDMARKS]; N_AGENTS];
    for k in 0..N_AGENTS {
        for l in 0..N_LANDMARKS {
            let cell = (k * N_LANDMARKS + l) as u64;
            let mut member_rng = substream(seed, Stream::Evaluation, 100 + cell);
            let mut env_rng = substream(seed, Stream::Evaluation, 200 + cell);
            let setups = (0..episodes)
                .map(|_| sheldon_setup(k, l, focus(agents, k, l, &mut member_rng)))
                .collect::<Result<Vec<_>>>()?;
            let finals = run_episodes(agents, &setups, &mut env_rng)?;
            let wins = finals.iter().filter(|s| episode_success(s, criterion)).count();
            success[k][l] = wins as f64 / episodes.max(1) as f64;
        }
    }
    Ok(SheldonGrid { success })
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

/// Evaluation results of one completed (scheme, seed) run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub trio_success: f64,
    pub grid: SheldonGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSummary {
    pub scheme: String,
    pub seeds: Vec<u64>,
    /// Trained-trio success across seeds.
    pub trio: Option<Stat>,
    /// Sheldon success across seeds and all 9 combinations.
    pub sheldon: Option<Stat>,
    /// Per-seed Sheldon grid gap (max - min).
    pub gap: Option<Stat>,
    /// Seeds whose results were missing or unreadable.
    pub missing: Vec<(u64, String)>,
}

pub fn summarize(scheme: &str, runs: &[RunResult], missing: Vec<(u64, String)>) -> SchemeSummary {
    let trio: Vec<f64> = runs.iter().map(|r| r.trio_success).collect();
    let sheldon: Vec<f64> = runs.iter().flat_map(|r| r.grid.values().collect::<Vec<_>>()).collect();
    let gaps: Vec<f64> = runs.iter().map(|r| r.grid.gap()).collect();
    SchemeSummary {
        scheme: scheme.to_string(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        trio: Stat::of(&trio),
        sheldon: Stat::of(&sheldon),
        gap: Stat::of(&gaps),
        missing,
    }
}

/// `scheme population mean std n` rows, one pair per scheme.
pub fn summary_tsv(summaries: &[SchemeSummary], provenance: &str) -> String {
    let mut out = String::from(provenance);
    for s in summaries {
        for (seed, why) in &s.missing {
            let _ = writeln!(out, "# {} seed {seed} missing: {why}", s.scheme);
        }
    }
    out.push_str("scheme\tpopulation\tmean\tstd\tn\n");
    for s in summaries {
        for (name, stat) in [("trained", s.trio), ("sheldon", s.sheldon), ("sheldon_gap", s.gap)] {
            match stat {
                Some(st) => {
                    let _ = writeln!(out, "{}\t{name}\t{:.6}\t{:.6}\t{}", s.scheme, st.mean, st.std, st.n);
                }
                None => {
                    let _ = writeln!(out, "{}\t{name}\tNA\tNA\t0", s.scheme);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Body, Vec2};
    use crate::maddpg::TrainConfig;
    use proptest::{prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(agents: [(f64, f64); 3], landmarks: [(f64, f64); 3]) -> WorldState {
        let body = |(x, y)| Body {
            position: Vec2::new(x, y),
            velocity: Vec2::ZERO,
            radius: 0.15,
            mass: 1.0,
        };
        WorldState {
            agents: agents.map(body),
            landmarks: landmarks.map(|(x, y)| Vec2::new(x, y)),
            timestep: HORIZON,
        }
    }

    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

    /// Some bijection in which every landmark's partner is within the radius
    /// and no farther than any other agent.
    fn oracle(s: &WorldState, r: f64) -> bool {
        let d = |l: usize, a: usize| {
            let (p, q) = (s.landmarks[l], s.agents[a].position);
            ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
        };
        PERMS.iter().any(|pi| (0..3).all(|l| d(l, pi[l]) <= r && (0..3).all(|a| d(l, pi[l]) <= d(l, a))))
    }

    #[test]
    fn agents_on_distinct_landmarks_succeed() {
        let lm = [(0.5, 0.5), (-0.5, 0.2), (0.0, -0.7)];
        let s = state([lm[2], lm[0], lm[1]], lm);
        assert_eq!(coverage_assignment(&s, &CoverageCriterion::default()), Some([1, 2, 0]));
    }

    #[test]
    fn doubled_up_agents_fail() {
        let lm = [(0.5, 0.5), (-0.5, 0.2), (0.0, -0.7)];
        let s = state([lm[0], (0.52, 0.5), lm[1]], lm);
        assert!(!episode_success(&s, &CoverageCriterion::default()));
        let s = state([lm[0], lm[1], (0.9, -0.9)], lm);
        assert!(!episode_success(&s, &CoverageCriterion::default()));
    }

    #[test]
    fn matches_exhaustive_bijection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut hits = 0;
        for _ in 0..20_000 {
            let lm: [(f64, f64); 3] = std::array::from_fn(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let ag: [(f64, f64); 3] = std::array::from_fn(|i| {
                let j = rng.gen_range(0..4);
                let base = if j < 3 { lm[(i + j) % 3] } else { (0.0, 0.0) };
                (base.0 + rng.gen_range(-0.3..0.3), base.1 + rng.gen_range(-0.3..0.3))
            });
            let s = state(ag, lm);
            let r = rng.gen_range(0.05..0.5);
            let got = episode_success(&s, &CoverageCriterion { radius: r });
            assert_eq!(got, oracle(&s, r));
            hits += got as usize;
        }
        assert!(hits > 500, "too few positive cases: {hits}");
    }

    proptest! {
        #[test]
        fn success_ignores_agent_order(
            coords in proptest::array::uniform12(-1.0f64..1.0),
            p in 0usize..6,
        ) {
            let lm = [(coords[0], coords[1]), (coords[2], coords[3]), (coords[4], coords[5])];
            let ag = [
                (lm[0].0 + coords[6] * 0.3, lm[0].1 + coords[7] * 0.3),
                (lm[1].0 + coords[8] * 0.3, lm[1].1 + coords[9] * 0.3),
                (lm[2].0 + coords[10] * 0.3, lm[2].1 + coords[11] * 0.3),
            ];
            let perm = PERMS[p];
            let crit = CoverageCriterion::default();
            let a = episode_success(&state(ag, lm), &crit);
            let b = episode_success(&state(perm.map(|i| ag[i]), lm), &crit);
            prop_assert_eq!(a, b);
        }
    }

    fn agents(scheme: Scheme, seed: u64) -> TrainedAgents {
        let cfg = TrainConfig {
            scheme,
            ..TrainConfig::default()
        };
        TrainedAgents::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn three_sheldons_nearly_always_succeed() {
        let a = agents(Scheme::Vanilla, 1);
        let crit = CoverageCriterion::default();
        let grid = sheldon_grid_with(&a, &crit, 500, 4, |_, _, free, _| {
            Controller::Sheldon(SheldonPolicy::new(free).unwrap())
        })
        .unwrap();
        assert!(grid.min() >= 0.98, "{grid:?}");
    }

    #[test]
    fn scripted_trio_gives_a_permutation_matrix() {
        let a = agents(Scheme::Vanilla, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let targets = [2, 0, 1];
        let setups = vec![targets.map(|l| Controller::Sheldon(SheldonPolicy::new(l).unwrap())); 300];
        let crit = CoverageCriterion::default();
        let mut counts = [[0usize; 3]; 3];
        for s in run_episodes(&a, &setups, &mut rng).unwrap() {
            if let Some(owner) = coverage_assignment(&s, &crit) {
                for (l, &body) in owner.iter().enumerate() {
                    counts[body][l] += 1;
                }
            }
        }
        let wins: usize = counts[0].iter().sum();
        assert!(wins > 290);
        for body in 0..3 {
            for l in 0..3 {
                assert_eq!(counts[body][l], if l == targets[body] { wins } else { 0 });
            }
        }
    }

    #[test]
    fn identical_policies_are_blind_to_shuffling() {
        let mut a = agents(Scheme::Vanilla, 2);
        let first = a.learners[0].clone();
        for l in &mut a.learners {
            *l = first.clone();
        }
        let mut b = a.clone();
        b.config.scheme = Scheme::Shuffle;
        let crit = CoverageCriterion { radius: 0.6 };
        let pa = preference_matrix(&a, 300, &crit, 3).unwrap();
        let pb = preference_matrix(&b, 300, &crit, 3).unwrap();
        assert_eq!(pa.successes, pb.successes);
        let ga = sheldon_grid(&a, &crit, 100, 3).unwrap();
        let gb = sheldon_grid(&b, &crit, 100, 3).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn batched_rollout_matches_single_episode_play() {
        let a = agents(Scheme::Vanilla, 6);
        let setups = vec![[Controller::Learner(0), Controller::Learner(1), Controller::Learner(2)]; 20];
        let batched = run_episodes(&a, &setups, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let world = World::new(a.config.physics);
        for end in batched {
            let mut s = world.reset(&mut rng);
            for _ in 0..HORIZON {
                let acts: [ActionVector; 3] = std::array::from_fn(|b| {
                    crate::maddpg::act(a.actor(b, 0), &observe(&s, b).unwrap(), 0.0, &mut rng)
                });
                s = world.step(&s, &acts).unwrap().0;
            }
            for b in 0..3 {
                assert!(s.agents[b].position.distance(end.agents[b].position) < 1e-9);
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let a = agents(Scheme::Ensemble { k: 3 }, 7);
        let crit = CoverageCriterion { radius: 0.8 };
        assert_eq!(preference_matrix(&a, 100, &crit, 1).unwrap(), preference_matrix(&a, 100, &crit, 1).unwrap());
        assert_eq!(sheldon_grid(&a, &crit, 50, 1).unwrap(), sheldon_grid(&a, &crit, 50, 1).unwrap());
    }

    #[test]
    fn preference_rows_sum_to_hundred() {
        let m = PreferenceMatrix {
            counts: [[3, 1, 0], [0, 0, 4], [1, 3, 0]],
            successes: 4,
            episodes: 10,
        };
        for row in m.percentages().unwrap() {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
        assert!(m.is_concentrated(60.0));
        let empty = PreferenceMatrix {
            counts: [[0; 3]; 3],
            successes: 0,
            episodes: 10,
        };
        assert!(empty.percentages().is_none());
        assert!(empty.to_tsv("").contains("empty"));
        assert_eq!(PreferenceMatrix::from_tsv(&m.to_tsv("# h\n")).unwrap(), m);
        assert_eq!(PreferenceMatrix::from_tsv(&empty.to_tsv("")).unwrap(), empty);
    }

    #[test]
    fn single_run_summary_has_zero_trio_std() {
        let grid = SheldonGrid {
            success: [[0.1, 0.5, 0.9], [0.2, 0.2, 0.2], [0.0, 1.0, 0.3]],
        };
        let s = summarize("vanilla", &[RunResult { seed: 0, trio_success: 0.4, grid }], vec![(1, "absent".into())]);
        assert_eq!(s.trio.unwrap().std, 0.0);
        assert!((s.gap.unwrap().mean - 1.0).abs() < 1e-12);
        let text = summary_tsv(&[s], "# h\n");
        assert!(text.contains("seed 1 missing"));
        assert_eq!(SheldonGrid::from_tsv(&grid.to_tsv("# x\n")).unwrap(), grid);
    }
}
