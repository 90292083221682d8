mod common;

use intentlab::env::{evaluate, observe, ActionVector, Body, World, WorldState, HORIZON, N_AGENTS, OBS_DIM};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reward_collisions_and_coverage_match_brute_force() {
    let colliding = common::environment_oracle_check(5, 1000).unwrap();
    assert!(colliding > 50, "oracle states rarely collide: {colliding}");
}

/// One integration step written out component by component.
fn brute_force_step(s: &WorldState, actions: &[ActionVector; 3]) -> WorldState {
    let mut next = *s;
    for (b, a) in next.agents.iter_mut().zip(actions) {
        let fx = 5.0 * (a.0[1] - a.0[2]);
        let fy = 5.0 * (a.0[3] - a.0[4]);
        b.velocity.x = b.velocity.x * 0.75 + fx * (0.1 / 1.0);
        b.velocity.y = b.velocity.y * 0.75 + fy * (0.1 / 1.0);
        b.position.x += b.velocity.x * 0.1;
        b.position.y += b.velocity.y * 0.1;
    }
    next.timestep += 1;
    next
}

fn arb_actions() -> impl Strategy<Value = [ActionVector; 3]> {
    proptest::array::uniform3(proptest::array::uniform5(0.0f64..=1.0)).prop_map(|a| a.map(ActionVector))
}

fn arb_state() -> impl Strategy<Value = WorldState> {
    (0u64..u64::MAX).prop_map(|seed| {
        let mut s = common::random_state(&mut ChaCha8Rng::seed_from_u64(seed));
        s.timestep = s.timestep.min(HORIZON - 1);
        s
    })
}

proptest! {
    #[test]
    fn step_matches_component_arithmetic(s in arb_state(), a in arb_actions()) {
        let (next, out) = World::default().step(&s, &a).unwrap();
        prop_assert_eq!(next, brute_force_step(&s, &a));
        prop_assert_eq!(out.reward, common::brute_force_outcome(&next).0);
    }

    #[test]
    fn reward_is_never_positive(s in arb_state()) {
        prop_assert!(evaluate(&s).reward <= 0.0);
        prop_assert!(evaluate(&s).collisions <= 3);
    }

    #[test]
    fn reward_ignores_agent_order(s in arb_state(), a in arb_actions(), p in 0usize..6) {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = PERMS[p];
        let mut t = s;
        t.agents = perm.map(|i| s.agents[i]);
        let w = World::default();
        let r1 = w.step(&s, &a).unwrap().1;
        let r2 = w.step(&t, &perm.map(|i| a[i])).unwrap().1;
        prop_assert!((r1.reward - r2.reward).abs() <= 1e-12);
        prop_assert_eq!(r1.collisions, r2.collisions);
    }

    #[test]
    fn long_rollouts_stay_finite(seed in 0u64..500, a in arb_actions()) {
        let w = World::default();
        let mut s = w.reset(&mut ChaCha8Rng::seed_from_u64(seed));
        for _ in 0..HORIZON {
            s = w.step(&s, &a).unwrap().0;
        }
        prop_assert!(s.agents.iter().all(|b: &Body| b.position.is_finite() && b.velocity.is_finite()));
        for k in 0..N_AGENTS {
            let o = observe(&s, k).unwrap();
            prop_assert_eq!(o.0.len(), OBS_DIM);
            prop_assert!(o.0.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn resting_idle_agents_are_fixed_points(s in arb_state()) {
        let mut s = s;
        for b in &mut s.agents {
            b.velocity = intentlab::env::Vec2::ZERO;
        }
        let next = World::default().step(&s, &[ActionVector::IDLE; 3]).unwrap().0;
        for (a, b) in s.agents.iter().zip(&next.agents) {
            prop_assert_eq!(a.position, b.position);
        }
    }
}
