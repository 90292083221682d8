//! Independent reference computations shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use intentlab::env::{evaluate, coverage_distance, Body, Vec2, WorldState, N_AGENTS, N_LANDMARKS};
use intentlab::nn::{Mlp, MlpSpec, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line forward pass read directly off the flat parameter vector
/// (per layer: `fan_out x fan_in` weights row-major, then biases).
/// Returns the pre-activations of every layer and the output.
pub fn naive_forward(spec: &MlpSpec, params: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dims = [spec.input_dim, spec.hidden[0], spec.hidden[1], spec.output_dim];
    let mut pre = Vec::new();
    let mut a = x.to_vec();
    let mut off = 0;
    for l in 0..3 {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let mut z = vec![0.0; n_out];
        for o in 0..n_out {
            let mut s = 0.0;
            for i in 0..n_in {
                s += params[off + o * n_in + i] * a[i];
            }
            z[o] = s + params[off + n_in * n_out + o];
        }
        off += n_in * n_out + n_out;
        a = if l < 2 {
            z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
        } else {
            match spec.output {
                OutputActivation::Identity => z.clone(),
                OutputActivation::Logistic => z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            }
        };
        pre.push(z);
    }
    (pre, a)
}

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-6 || diff <= 1e-4 * analytic.abs().max(numeric.abs())
}

/// Random MLP with every width in 1..=8, parameters uniform in [-1, 1].
pub fn random_small_mlp(rng: &mut ChaCha8Rng) -> Mlp {
    let output = if rng.gen_bool(0.5) {
        OutputActivation::Identity
    } else {
        OutputActivation::Logistic
    };
    let spec = MlpSpec::new(rng.gen_range(1..=8), rng.gen_range(1..=8), output)
        .with_hidden(rng.gen_range(1..=8), rng.gen_range(1..=8));
    let params = (0..spec.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Mlp::from_params(spec, params).unwrap()
}

/// Compares every analytic parameter and input gradient of
/// `sum(output * upstream)` with central differences at step 1e-5.
/// Inputs are redrawn until no hidden pre-activation sits within 1e-3 of
/// the rectifier kink, where differences are not defined.
/// Returns the number of entries checked.
pub fn gradient_check(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = random_small_mlp(&mut rng);
    let spec = *net.spec();
    let x = loop {
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (pre, _) = naive_forward(&spec, net.params(), &x);
        if pre[..2].iter().flatten().all(|z| z.abs() > 1e-3) {
            break x;
        }
    };
    let g: Vec<f64> = (0..spec.output_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |net: &Mlp, x: &[f64]| -> f64 {
        net.forward(x).unwrap().output.iter().zip(&g).map(|(o, g)| o * g).sum()
    };

    let trace = net.forward(&x).map_err(|e| e.to_string())?;
    let (dparams, dinput) = net.backward(&trace, &g).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut checked = 0;
    for i in 0..spec.param_count() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = objective(&net, &x);
        net.params_mut()[i] = orig - h;
        let down = objective(&net, &x);
        net.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        if !close(dparams[i], numeric) {
            return Err(format!("seed {seed}: param {i} analytic {} numeric {numeric}", dparams[i]));
        }
        checked += 1;
    }
    for i in 0..spec.input_dim {
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let numeric = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
        if !close(dinput[i], numeric) {
            return Err(format!("seed {seed}: input {i} analytic {} numeric {numeric}", dinput[i]));
        }
        checked += 1;
    }
    Ok(checked)
}

/// State with clustered agents so that collisions and coverage both occur.
pub fn random_state(rng: &mut ChaCha8Rng) -> WorldState {
    let spread = rng.gen_range(0.05..1.5);
    let centre = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let agents = std::array::from_fn(|_| Body {
        position: Vec2::new(
            centre.0 + rng.gen_range(-spread..spread),
            centre.1 + rng.gen_range(-spread..spread),
        ),
        velocity: Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        radius: 0.15,
        mass: 1.0,
    });
    let landmarks = std::array::from_fn(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    WorldState {
        agents,
        landmarks,
        timestep: rng.gen_range(0..=25),
    }
}

/// Brute-force reward, collision count and per-landmark coverage distance
/// from raw coordinates.
pub fn brute_force_outcome(s: &WorldState) -> (f64, usize, [f64; N_LANDMARKS]) {
    let mut cover = [0.0; N_LANDMARKS];
    for i in 0..N_LANDMARKS {
        let mut best = f64::INFINITY;
        for j in 0..N_AGENTS {
            let dx = s.landmarks[i].x - s.agents[j].position.x;
            let dy = s.landmarks[i].y - s.agents[j].position.y;
            let d = (dx * dx + dy * dy).sqrt();
            if d < best {
                best = d;
            }
        }
        cover[i] = best;
    }
    let mut collisions = 0;
    for a in 0..N_AGENTS {
        for b in a + 1..N_AGENTS {
            let dx = s.agents[a].position.x - s.agents[b].position.x;
            let dy = s.agents[a].position.y - s.agents[b].position.y;
            if (dx * dx + dy * dy).sqrt() < s.agents[a].radius + s.agents[b].radius {
                collisions += 1;
            }
        }
    }
    let reward = -(cover[0] + cover[1] + cover[2]) - collisions as f64;
    (reward, collisions, cover)
}

/// Checks `n` random states for exact agreement with the brute-force
/// oracle. Returns how many states had at least one collision.
pub fn environment_oracle_check(seed: u64, n: usize) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut colliding = 0;
    for k in 0..n {
        let s = random_state(&mut rng);
        let (reward, collisions, cover) = brute_force_outcome(&s);
        let out = evaluate(&s);
        if out.reward != reward || out.collisions != collisions || coverage_distance(&s) != cover {
            return Err(format!(
                "state {k}: got ({}, {}, {:?}), oracle ({reward}, {collisions}, {cover:?})",
                out.reward,
                out.collisions,
                coverage_distance(&s)
            ));
        }
        colliding += (collisions > 0) as usize;
    }
    Ok(colliding)
}
