//! Cooperative navigation in a 2D point-mass world.
//!
//! Three agents and three landmarks. Every agent receives the same reward,
//! `-(sum over landmarks of the distance to the closest agent) - collisions`,
//! and episodes always run for [`HORIZON`] steps.

use std::ops::{Add, AddAssign, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_AGENTS: usize = 3;
pub const N_LANDMARKS: usize = 3;
pub const HORIZON: usize = 25;
pub const OBS_DIM: usize = 14;
pub const ACT_DIM: usize = 5;

/// Unordered agent pairs, i.e. the most collisions a single step can count.
pub const AGENT_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// World constants. The defaults are those of the standard particle
/// environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Physics {
    pub dt: f64,
    pub damping: f64,
    pub mass: f64,
    pub sensitivity: f64,
    pub agent_radius: f64,
    pub landmark_radius: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            dt: 0.1,
            damping: 0.25,
            mass: 1.0,
            sensitivity: 5.0,
            agent_radius: 0.15,
            landmark_radius: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agents: [Body; N_AGENTS],
    pub landmarks: [Vec2; N_LANDMARKS],
    pub timestep: usize,
}

/// Egocentric observation of one agent:
/// `[vel(2), pos(2), landmark - self (3 x 2), other - self (2 x 2)]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `[no-op, +x, -x, +y, -y]`, every component in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActionVector(pub [f64; ACT_DIM]);

impl ActionVector {
    pub const IDLE: ActionVector = ActionVector([0.0; ACT_DIM]);

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Clamps every component into `[0, 1]`. NaN maps to 0.
    pub fn clamped(values: [f64; ACT_DIM]) -> Self {
        ActionVector(values.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub collisions: usize,
    /// `distances[i][j]`: landmark `i` to agent `j`.
    pub distances: [[f64; N_AGENTS]; N_LANDMARKS],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub physics: Physics,
}

impl World {
    pub fn new(physics: Physics) -> Self {
        World { physics }
    }

    /// Agents and landmarks uniform in `[-1, 1]^2`, agents at rest.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldState {
        let mut sample = || Vec2::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
        let agents = std::array::from_fn(|_| Body {
            position: sample(),
            velocity: Vec2::ZERO,
            radius: self.physics.agent_radius,
            mass: self.physics.mass,
        });
        let landmarks = std::array::from_fn(|_| sample());
        WorldState {
            agents,
            landmarks,
            timestep: 0,
        }
    }

    pub fn action_to_force(&self, action: &ActionVector) -> Vec2 {
        let a = &action.0;
        Vec2::new(a[1] - a[2], a[3] - a[4]) * self.physics.sensitivity
    }

    /// Advances one step with semi-implicit Euler integration; reward and
    /// collisions are computed on the resulting state.
    pub fn step(
        &self,
        world: &WorldState,
        actions: &[ActionVector; N_AGENTS],
    ) -> Result<(WorldState, StepOutcome)> {
        if world.timestep >= HORIZON {
            return Err(Error::EpisodeFinished(world.timestep));
        }
        let p = &self.physics;
        let mut next = *world;
        for (body, action) in next.agents.iter_mut().zip(actions) {
            let force = self.action_to_force(action);
            body.velocity = body.velocity * (1.0 - p.damping) + force * (p.dt / body.mass);
            body.position += body.velocity * p.dt;
        }
        next.timestep += 1;
        let outcome = evaluate(&next);
        Ok((next, outcome))
    }
}

/// Landmark-to-agent distances, collisions and the shared reward of a state.
pub fn evaluate(world: &WorldState) -> StepOutcome {
    let distances = distance_matrix(world);
    let collisions = collision_count(world);
    let coverage: f64 = distances.iter().map(row_min).sum();
    StepOutcome {
        reward: -coverage - collisions as f64,
        collisions,
        distances,
    }
}

pub fn distance_matrix(world: &WorldState) -> [[f64; N_AGENTS]; N_LANDMARKS] {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| world.landmarks[i].distance(world.agents[j].position))
    })
}

pub fn collision_count(world: &WorldState) -> usize {
    AGENT_PAIRS
        .iter()
        .filter(|&&(a, b)| {
            let (a, b) = (&world.agents[a], &world.agents[b]);
            a.position.distance(b.position) < a.radius + b.radius
        })
        .count()
}

/// For each landmark, the distance to its closest agent.
pub fn coverage_distance(world: &WorldState) -> [f64; N_LANDMARKS] {
    distance_matrix(world).map(|row| row_min(&row))
}

fn row_min(row: &[f64; N_AGENTS]) -> f64 {
    row.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn observe(world: &WorldState, agent: usize) -> Result<Observation> {
    if agent >= N_AGENTS {
        return Err(Error::AgentIndex(agent));
    }
    let me = &world.agents[agent];
    let mut obs = [0.0; OBS_DIM];
    obs[0] = me.velocity.x;
    obs[1] = me.velocity.y;
    obs[2] = me.position.x;
    obs[3] = me.position.y;
    for (i, landmark) in world.landmarks.iter().enumerate() {
        let rel = *landmark - me.position;
        obs[4 + 2 * i] = rel.x;
        obs[5 + 2 * i] = rel.y;
    }
    for (slot, other) in (0..N_AGENTS).filter(|&j| j != agent).enumerate() {
        let rel = world.agents[other].position - me.position;
        obs[10 + 2 * slot] = rel.x;
        obs[11 + 2 * slot] = rel.y;
    }
    Ok(Observation(obs))
}

/// Observations of all agents, in body order.
pub fn observe_all(world: &WorldState) -> [Observation; N_AGENTS] {
    std::array::from_fn(|k| observe(world, k).expect("agent index in range"))
}

/// Index of the landmark closest to `point`, lowest index on ties.
pub fn nearest_landmark(world: &WorldState, point: Vec2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, l) in world.landmarks.iter().enumerate() {
        let d = l.distance(point);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}
