use proptest::prelude::*;
use tending_core::env::{Scenario, ScenarioConfig, WorldState};
use tending_core::rng::DetRng;

fn random_actions(rng: &mut DetRng, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| [rng.uniform_in(-1.5, 1.5), rng.uniform_in(-1.5, 1.5)])
        .collect()
}

fn scenario(reduced: bool) -> Scenario {
    let cfg = if reduced {
        ScenarioConfig::reduced()
    } else {
        ScenarioConfig::default()
    };
    Scenario::new(cfg).unwrap()
}

fn carrying(s: &WorldState) -> u64 {
    s.agents.iter().filter(|a| a.carrying).count() as u64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_is_bit_identical(seed in any::<u64>(), action_seed in any::<u64>(), reduced in any::<bool>()) {
        let sc = scenario(reduced);
        let run = || {
            let mut rng = DetRng::new(action_seed, 0);
            let (mut s, _) = sc.reset(seed).unwrap();
            let mut trace = vec![s.clone()];
            for _ in 0..200 {
                let a = random_actions(&mut rng, sc.n_agents());
                sc.step(&mut s, &a);
                trace.push(s.clone());
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn step_invariants_hold(seed in any::<u64>(), action_seed in any::<u64>()) {
        let sc = scenario(false);
        let c = sc.config().clone();
        let lim = c.arena_half_extent - c.agent_radius;
        let mut rng = DetRng::new(action_seed, 0);
        let (mut s, _) = sc.reset(seed).unwrap();
        let mut credited = 0u64;
        let mut shaping = vec![0.0; c.n_agents];
        let start_dist = s.goal_dist.clone();
        for _ in 0..c.max_steps {
            let a = random_actions(&mut rng, c.n_agents);
            let out = sc.step(&mut s, &a);

            for ag in &s.agents {
                prop_assert!(ag.position.x.abs() <= lim + 1e-9 && ag.position.y.abs() <= lim + 1e-9);
                for b in sc.inflated_blockers() {
                    prop_assert!(!b.inflate(-1e-9).contains_strictly(ag.position));
                }
            }
            let produced: u64 = s.machines.iter().map(|m| m.parts_produced).sum();
            prop_assert_eq!(produced, s.delivered_total + carrying(&s));

            let info = &out.info;
            // agent pairs add two events and one count, blocker contacts one of each
            let events: u32 = info.agent_collisions.iter().sum();
            let pairs = info.collision_pairs_this_step;
            prop_assert!(events >= pairs && events <= 2 * pairs);

            #[allow(clippy::needless_range_loop)]
            for i in 0..c.n_agents {
                let r = c.r_deliver * f64::from(info.agent_deliveries[i]) + c.r_pickup * f64::from(info.agent_pickups[i])
                    + info.agent_shaping[i]
                    - c.w_collision * f64::from(info.agent_collisions[i])
                    - c.w_time;
                prop_assert!((r - out.rewards[i]).abs() < 1e-12);
                shaping[i] += info.agent_shaping[i];
            }
            credited += u64::from(info.agent_deliveries.iter().sum::<u32>());
        }
        prop_assert_eq!(credited, s.delivered_total);
        for i in 0..c.n_agents {
            let want = c.w_shaping * (start_dist[i] - s.goal_dist[i]);
            prop_assert!((shaping[i] - want).abs() < 1e-6);
        }
    }
}

#[test]
fn pair_collision_counts_once_and_charges_both() {
    let sc = scenario(false);
    let (mut s, _) = sc.reset(3).unwrap();
    s.agents[0].position = tending_core::env::Vec2::new(0.0, 0.0);
    s.agents[1].position = tending_core::env::Vec2::new(0.06, 0.0);
    s.agents[2].position = tending_core::env::Vec2::new(0.8, 0.5);
    for a in &mut s.agents {
        a.velocity = tending_core::env::Vec2::ZERO;
    }
    let out = sc.step(&mut s, &[[0.0; 2]; 3]);
    assert_eq!(out.info.collision_pairs_this_step, 1);
    assert_eq!(out.info.agent_collisions, [1, 1, 0]);
    let c = sc.config();
    let penalty = out.rewards[0] - out.info.agent_shaping[0] + c.w_time;
    assert!((penalty + c.w_collision).abs() < 1e-12);
}
