//! Hand-coded policies. A Sheldon always drives to the same landmark.

use serde::{Deserialize, Serialize};

use crate::env::{ActionVector, Observation, Vec2, ACT_DIM, N_LANDMARKS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheldonPolicy {
    pub target_landmark: usize,
    /// Proportional gain on the egocentric landmark offset.
    pub gain: f64,
    /// Damping gain on the agent's own velocity.
    pub brake: f64,
}

impl SheldonPolicy {
    pub fn new(target_landmark: usize) -> Result<Self> {
        SheldonPolicy::with_gains(target_landmark, 2.0, 1.0)
    }

    pub fn with_gains(target_landmark: usize, gain: f64, brake: f64) -> Result<Self> {
        if target_landmark >= N_LANDMARKS {
            return Err(Error::Config(format!(
                "Sheldon target landmark {target_landmark} out of range"
            )));
        }
        if !(gain > 0.0 && brake > 0.0) {
            return Err(Error::Config("Sheldon gains must be positive".into()));
        }
        Ok(SheldonPolicy {
            target_landmark,
            gain,
            brake,
        })
    }

    /// Desired acceleration `gain * offset - brake * velocity`, routed into
    /// the directional action slots by sign.
    pub fn act(&self, obs: &Observation) -> ActionVector {
        let o = &obs.0;
        let offset = Vec2::new(o[4 + 2 * self.target_landmark], o[5 + 2 * self.target_landmark]);
        let velocity = Vec2::new(o[0], o[1]);
        let desired = offset * self.gain - velocity * self.brake;
        let mut a = [0.0; ACT_DIM];
        a[1] = desired.x.max(0.0);
        a[2] = (-desired.x).max(0.0);
        a[3] = desired.y.max(0.0);
        a[4] = (-desired.y).max(0.0);
        ActionVector::clamped(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{observe, World, HORIZON};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs_with(offset: (f64, f64), vel: (f64, f64)) -> Observation {
        let mut o = [0.0; 14];
        o[0] = vel.0;
        o[1] = vel.1;
        o[4] = offset.0;
        o[5] = offset.1;
        Observation(o)
    }

    #[test]
    fn idle_on_target() {
        let a = SheldonPolicy::new(0).unwrap().act(&obs_with((0.0, 0.0), (0.0, 0.0)));
        assert_eq!(a.0, [0.0; 5]);
    }

    #[test]
    fn routes_by_sign() {
        let a = SheldonPolicy::new(0).unwrap().act(&obs_with((0.2, 0.0), (0.0, 0.0)));
        assert!(a.0[1] > 0.0);
        assert_eq!(a.0[2], 0.0);

        let a = SheldonPolicy::new(0).unwrap().act(&obs_with((0.3, -0.4), (0.0, 0.0)));
        assert!((a.0[1] - 0.6).abs() < 1e-12);
        assert_eq!(a.0[2], 0.0);
        assert_eq!(a.0[3], 0.0);
        assert!((a.0[4] - 0.8).abs() < 1e-12);
        assert_eq!(a.0[0], 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SheldonPolicy::new(3).is_err());
        assert!(SheldonPolicy::with_gains(0, 0.0, 1.0).is_err());
    }

    #[test]
    fn lone_sheldon_arrives_within_horizon() {
        let world = World::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trials = 2000;
        let mut arrived = 0;
        for i in 0..trials {
            let target = i % 3;
            let policy = SheldonPolicy::new(target).unwrap();
            let mut s = world.reset(&mut rng);
            for _ in 0..HORIZON {
                let a = policy.act(&observe(&s, 0).unwrap());
                s = world.step(&s, &[a, ActionVector::IDLE, ActionVector::IDLE]).unwrap().0;
            }
            if s.agents[0].position.distance(s.landmarks[target]) < 0.1 {
                arrived += 1;
            }
        }
        assert!(arrived as f64 >= 0.99 * trials as f64, "{arrived}/{trials}");
    }
}
