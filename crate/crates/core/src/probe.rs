//! Linear read-out of final landmarks from recorded features.
//!
//! For every (predictor agent, target agent, feature source, timestep) a
//! 3-class softmax regression is trained on 75% of the episodes and scored
//! on the remaining 25%.

use std::fmt::Write as _;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{HORIZON, N_AGENTS, N_LANDMARKS};
use crate::error::{Error, Result};
use crate::nn::{gemm, Matrix, Op};
use crate::record::{EpisodeRecord, FeatureSource};
use crate::rng::{stream, Stream};

pub const N_CLASSES: usize = N_LANDMARKS;
pub const TEST_FRACTION: f64 = 0.25;

/// Episode-level train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Random partition of `n` episodes with `round(n * test_fraction)`
    /// held out.
    pub fn random<R: Rng + ?Sized>(n: usize, test_fraction: f64, rng: &mut R) -> Self {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n_test = ((n as f64) * test_fraction).round() as usize;
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Split { train, test }
    }

    pub fn seeded(n: usize, seed: u64) -> Self {
        Split::random(n, TEST_FRACTION, &mut stream(seed, Stream::Split))
    }
}

/// Final landmark of `agent`: the landmark nearest its last position.
pub fn final_landmark_label(episode: &EpisodeRecord, agent: usize) -> usize {
    episode.final_landmark(agent)
}

#[derive(Clone, Debug)]
pub struct ProbeDataset {
    /// One row per episode.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl ProbeDataset {
    pub fn new(features: Matrix, labels: Vec<usize>, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension {
                context: "ProbeDataset rows vs labels",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        let mut seen = vec![false; labels.len()];
        for &i in split.train.iter().chain(&split.test) {
            if i >= labels.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config("split is not a partition of the rows".into()));
            }
        }
        if labels.iter().any(|&l| l >= N_CLASSES) {
            return Err(Error::Config("label out of range".into()));
        }
        Ok(ProbeDataset { features, labels, split })
    }
}

/// Features of `predictor` at `timestep` labelled with `target`'s final
/// landmark, one row per episode.
pub fn build_dataset(
    records: &[EpisodeRecord],
    predictor: usize,
    target: usize,
    source: FeatureSource,
    timestep: usize,
    split: &Split,
) -> Result<ProbeDataset> {
    if records.is_empty() {
        return Err(Error::Empty("episode records"));
    }
    if predictor >= N_AGENTS || target >= N_AGENTS {
        return Err(Error::AgentIndex(predictor.max(target)));
    }
    if timestep >= HORIZON {
        return Err(Error::Config(format!("timestep {timestep} beyond horizon")));
    }
    let features = feature_matrix(records, predictor, source, timestep);
    let labels = records.iter().map(|e| final_landmark_label(e, target)).collect();
    ProbeDataset::new(features, labels, split.clone())
}

fn feature_matrix(records: &[EpisodeRecord], agent: usize, source: FeatureSource, timestep: usize) -> Matrix {
    let d = source.dim();
    let mut m = Matrix::zeros(records.len(), d);
    for (r, e) in records.iter().enumerate() {
        for (dst, &src) in m.row_mut(r).iter_mut().zip(e.features(timestep, agent, source)) {
            *dst = f64::from(src);
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// L2 penalty `l2 / 2 * |W|^2` on the weights (not the biases).
    pub l2: f64,
    /// Stop once the gradient norm drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            l2: 1e-3,
            tolerance: 1e-5,
            max_iterations: 2000,
        }
    }
}

/// Softmax regression over standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeModel {
    /// `N_CLASSES x d`, acting on standardized features.
    pub weights: Matrix,
    pub bias: [f64; N_CLASSES],
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ProbeModel {
    pub fn scores(&self, x: &[f64]) -> [f64; N_CLASSES] {
        std::array::from_fn(|c| {
            self.weights
                .row(c)
                .iter()
                .zip(x.iter().zip(self.mean.iter().zip(&self.scale)))
                .map(|(w, (x, (m, s)))| w * (x - m) / s)
                .sum::<f64>()
                + self.bias[c]
        })
    }

    pub fn probabilities(&self, x: &[f64]) -> [f64; N_CLASSES] {
        softmax(self.scores(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }

    pub fn accuracy(&self, features: &Matrix, labels: &[usize], rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return f64::NAN;
        }
        let hits = rows
            .iter()
            .filter(|&&r| self.predict(features.row(r)) == labels[r])
            .count();
        hits as f64 / rows.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeFit {
    pub model: ProbeModel,
    pub test_accuracy: f64,
    pub train_accuracy: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Training rows held a single class; the model predicts it constantly.
    pub degenerate: bool,
}

pub fn softmax(scores: [f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = scores.map(|s| (s - max).exp());
    let z: f64 = e.iter().sum();
    e.map(|v| v / z)
}

fn argmax(v: &[f64; N_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..N_CLASSES {
        if v[c] > v[best] {
            best = c;
        }
    }
    best
}

/// Fits a probe by full-batch gradient descent with step `1 / L`, where `L`
/// bounds the curvature of the penalized cross-entropy.
pub fn train_probe(ds: &ProbeDataset, cfg: &ProbeConfig) -> Result<ProbeFit> {
    let train = &ds.split.train;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let d = ds.features.cols();
    let n = train.len();

    let mut mean = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for &r in train {
        for (m, x) in mean.iter_mut().zip(ds.features.row(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for &r in train {
        for ((s, x), m) in scale.iter_mut().zip(ds.features.row(r)).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut scale {
        *s = (*s / n as f64).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }

    let mut x = Matrix::zeros(n, d);
    let mut y = vec![0usize; n];
    let mut counts = [0usize; N_CLASSES];
    for (i, &r) in train.iter().enumerate() {
        for (((dst, v), m), s) in x.row_mut(i).iter_mut().zip(ds.features.row(r)).zip(&mean).zip(&scale) {
            *dst = (v - m) / s;
        }
        y[i] = ds.labels[r];
        counts[y[i]] += 1;
    }

    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        let majority = (0..N_CLASSES).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
        warn!("probe training data holds only class {majority}; using a constant model");
        let mut bias = [0.0; N_CLASSES];
        bias[majority] = 1.0;
        let model = ProbeModel {
            weights: Matrix::zeros(N_CLASSES, d),
            bias,
            mean,
            scale,
        };
        return Ok(finish(ds, model, 0, 0.0, true));
    }

    let lipschitz = 0.5 * max_eigenvalue_with_bias(&x) + cfg.l2;
    let step = 1.0 / lipschitz;

    let mut w = Matrix::zeros(N_CLASSES, d);
    let mut b = [0.0; N_CLASSES];
    let mut scores = vec![0.0; n * N_CLASSES];
    let mut gw = vec![0.0; N_CLASSES * d];
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    let inv_n = 1.0 / n as f64;

    while iterations < cfg.max_iterations {
        // residuals (p - onehot) / n, in place of the scores
        gemm(1.0, (&x).into(), Op::N, (&w).into(), Op::T, 0.0, &mut scores, N_CLASSES);
        let mut gb = [0.0; N_CLASSES];
        for (i, row) in scores.chunks_exact_mut(N_CLASSES).enumerate() {
            let p = softmax(std::array::from_fn(|c| row[c] + b[c]));
            for c in 0..N_CLASSES {
                let g = (p[c] - if c == y[i] { 1.0 } else { 0.0 }) * inv_n;
                row[c] = g;
                gb[c] += g;
            }
        }
        gemm(
            1.0,
            crate::nn::View::new(&scores, n, N_CLASSES),
            Op::T,
            (&x).into(),
            Op::N,
            0.0,
            &mut gw,
            d,
        );
        for (g, wv) in gw.iter_mut().zip(w.as_slice()) {
            *g += cfg.l2 * wv;
        }
        grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if grad_norm < cfg.tolerance {
            break;
        }
        for (wv, g) in w.as_mut_slice().iter_mut().zip(&gw) {
            *wv -= step * g;
        }
        for c in 0..N_CLASSES {
            b[c] -= step * gb[c];
        }
        iterations += 1;
    }

    let model = ProbeModel {
        weights: w,
        bias: b,
        mean,
        scale,
    };
    Ok(finish(ds, model, iterations, grad_norm, false))
}

fn finish(ds: &ProbeDataset, model: ProbeModel, iterations: usize, gradient_norm: f64, degenerate: bool) -> ProbeFit {
    ProbeFit {
        test_accuracy: model.accuracy(&ds.features, &ds.labels, &ds.split.test),
        train_accuracy: model.accuracy(&ds.features, &ds.labels, &ds.split.train),
        model,
        iterations,
        gradient_norm,
        degenerate,
    }
}

/// Largest eigenvalue of `[x 1]^T [x 1] / n` by power iteration.
fn max_eigenvalue_with_bias(x: &Matrix) -> f64 {
    let n = x.rows();
    let d = x.cols() + 1;
    let mut aug = Matrix::zeros(n, d);
    for r in 0..n {
        let row = aug.row_mut(r);
        row[..d - 1].copy_from_slice(x.row(r));
        row[d - 1] = 1.0;
    }
    let mut gram = vec![0.0; d * d];
    gemm(1.0 / n as f64, (&aug).into(), Op::T, (&aug).into(), Op::N, 0.0, &mut gram, d);
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut next = vec![0.0; d];
        for (i, out) in next.iter_mut().enumerate() {
            *out = gram[i * d..(i + 1) * d].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|v| *v /= norm);
        let converged = (norm - lambda).abs() <= 1e-10 * norm;
        lambda = norm;
        v = next;
        if converged {
            break;
        }
    }
    // power iteration approaches from below
    lambda * 1.01
}

/// Test accuracy for every (predictor, target, source, timestep) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyGrid {
    values: Vec<f64>,
    /// Cells whose training split held a single class.
    pub degenerate: Vec<bool>,
}

impl AccuracyGrid {
    const LEN: usize = N_AGENTS * N_AGENTS * 4 * HORIZON;

    pub fn new() -> Self {
        AccuracyGrid {
            values: vec![f64::NAN; Self::LEN],
            degenerate: vec![false; Self::LEN],
        }
    }

    fn index(predictor: usize, target: usize, source: FeatureSource, t: usize) -> usize {
        ((predictor * N_AGENTS + target) * 4 + source as usize) * HORIZON + t
    }

    pub fn get(&self, predictor: usize, target: usize, source: FeatureSource, t: usize) -> f64 {
        self.values[Self::index(predictor, target, source, t)]
    }

    pub fn set(&mut self, predictor: usize, target: usize, source: FeatureSource, t: usize, v: f64) {
        self.values[Self::index(predictor, target, source, t)] = v;
    }

    pub fn is_degenerate(&self, predictor: usize, target: usize, source: FeatureSource, t: usize) -> bool {
        self.degenerate[Self::index(predictor, target, source, t)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean accuracy over the off-diagonal (other-agent) cells for `source`
    /// over the given timesteps.
    pub fn mean_other(&self, source: FeatureSource, timesteps: impl IntoIterator<Item = usize> + Clone) -> f64 {
        self.mean_where(source, timesteps, |p, t| p != t)
    }

    /// Mean over the self-prediction diagonal.
    pub fn mean_self(&self, source: FeatureSource, timesteps: impl IntoIterator<Item = usize> + Clone) -> f64 {
        self.mean_where(source, timesteps, |p, t| p == t)
    }

    fn mean_where(
        &self,
        source: FeatureSource,
        timesteps: impl IntoIterator<Item = usize> + Clone,
        keep: impl Fn(usize, usize) -> bool,
    ) -> f64 {
        let mut sum = 0.0;
        let mut n = 0;
        for p in 0..N_AGENTS {
            for q in 0..N_AGENTS {
                if !keep(p, q) {
                    continue;
                }
                for t in timesteps.clone() {
                    sum += self.get(p, q, source, t);
                    n += 1;
                }
            }
        }
        sum / n as f64
    }

    /// Delimited table: `predictor target source timestep test_accuracy`,
    /// preceded by `#` comment lines from `provenance`.
    pub fn to_tsv(&self, provenance: &str) -> String {
        let mut out = String::from(provenance);
        out.push_str("predictor\ttarget\tsource\ttimestep\ttest_accuracy\n");
        for p in 0..N_AGENTS {
            for q in 0..N_AGENTS {
                for source in FeatureSource::ALL {
                    for t in 0..HORIZON {
                        let _ = writeln!(out, "{p}\t{q}\t{}\t{t}\t{:.6}", source.name(), self.get(p, q, source, t));
                    }
                }
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut grid = AccuracyGrid::new();
        let mut filled = 0;
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Config(format!("malformed accuracy row {line:?}"));
            if f.len() != 5 {
                return Err(bad());
            }
            let p: usize = f[0].parse().map_err(|_| bad())?;
            let q: usize = f[1].parse().map_err(|_| bad())?;
            let source = FeatureSource::ALL
                .into_iter()
                .find(|s| s.name() == f[2])
                .ok_or_else(bad)?;
            let t: usize = f[3].parse().map_err(|_| bad())?;
            let v: f64 = f[4].parse().map_err(|_| bad())?;
            if p >= N_AGENTS || q >= N_AGENTS || t >= HORIZON {
                return Err(bad());
            }
            grid.set(p, q, source, t, v);
            filled += 1;
        }
        if filled != Self::LEN {
            return Err(Error::Config(format!("accuracy table has {filled} rows, expected {}", Self::LEN)));
        }
        Ok(grid)
    }
}

impl Default for AccuracyGrid {
    fn default() -> Self {
        Self::new()
    }
}

/// Trains all `3 x 3 x 4 x 25` probes. The episode split is drawn once from
/// `split_seed` and shared by every cell.
pub fn accuracy_curves(records: &[EpisodeRecord], split_seed: u64, cfg: &ProbeConfig) -> Result<AccuracyGrid> {
    if records.is_empty() {
        return Err(Error::Empty("episode records"));
    }
    let split = Split::seeded(records.len(), split_seed);
    let labels: Vec<Vec<usize>> = (0..N_AGENTS)
        .map(|q| records.iter().map(|e| final_landmark_label(e, q)).collect())
        .collect();

    let jobs: Vec<(usize, FeatureSource, usize)> = (0..N_AGENTS)
        .flat_map(|p| FeatureSource::ALL.into_iter().flat_map(move |s| (0..HORIZON).map(move |t| (p, s, t))))
        .collect();
    type Cell = (usize, usize, FeatureSource, usize, ProbeFit);
    let results: Vec<Result<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&(p, source, t)| {
            let features = feature_matrix(records, p, source, t);
            (0..N_AGENTS)
                .map(|q| {
                    let ds = ProbeDataset::new(features.clone(), labels[q].clone(), split.clone())?;
                    Ok((p, q, source, t, train_probe(&ds, cfg)?))
                })
                .collect()
        })
        .collect();

    let mut grid = AccuracyGrid::new();
    for batch in results {
        for (p, q, source, t, fit) in batch? {
            grid.set(p, q, source, t, fit.test_accuracy);
            grid.degenerate[AccuracyGrid::index(p, q, source, t)] = fit.degenerate;
        }
    }
    Ok(grid)
}
