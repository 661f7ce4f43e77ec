use proptest::prelude::*;
use robevo::env::swarm::{World, ARENA, CELL, NEST_RADIUS, ROBOTS, ROBOT_RADIUS};
use robevo::net::{Controller, Network};
use robevo::protocol::{generate_matrix, MatrixRole};
use robevo::rng::{stream_rng, Stream};
use robevo::{Environment, Swarm};

fn random_row(seed: u64) -> Vec<f64> {
    let env = Swarm::default();
    let mut rng = stream_rng(seed, Stream::Environment);
    generate_matrix(&mut rng, &env.condition_ranges(), 1, MatrixRole::Evaluation)
        .row(0)
        .to_vec()
}

fn genome(seed: u64) -> Network {
    let env = Swarm::default();
    let n = env.topology().param_count();
    let w = (0..n).map(|i| 3.0 * ((i as f64 + 1.0) * (seed as f64 + 0.37)).sin()).collect();
    Network::new(env.topology(), w).unwrap()
}

const OUT_STEPS: usize = 30;
// (2·0.9745 - 1)·0.3 m/s on opposite wheels turns π in 16 steps
const TURN: [f64; 4] = [0.0255, 0.9745, 0.0, 0.0];
const TURN_STEPS: usize = 16;

#[test]
fn drive_out_turn_back_releases_what_was_picked_up() {
    let mut w = World::new((2.5, 2.5), &[(2.55, 2.6, 0.0)]).unwrap();
    for _ in 0..OUT_STEPS {
        w.step(&[[1.0, 1.0, 0.0, 0.0]]);
    }
    let r = &w.robots[0];
    assert!((r.x - (2.55 + 0.03 * OUT_STEPS as f64)).abs() < 1e-9);
    // x crossed 2.75 inside the nest (released at once), then 3.0 and 3.25
    assert_eq!(w.released, 1);
    assert_eq!(r.carried, 2);
    assert!(r.energy() < 1.0);
    for _ in 0..TURN_STEPS {
        w.step(&[TURN]);
    }
    let r = &w.robots[0];
    assert!((r.heading.abs() - std::f64::consts::PI).abs() < 1e-3, "{}", r.heading);
    assert!((r.x - 3.45).abs() < 1e-9);
    for _ in 0..OUT_STEPS {
        w.step(&[[1.0, 1.0, 0.0, 0.0]]);
    }
    let r = &w.robots[0];
    assert!(w.in_nest(r.x, r.y));
    // the way back crosses x = 2.5 into a still-full cell inside the nest
    assert_eq!((w.released, r.carried, r.energy()), (4, 0, 1.0));
    assert_eq!(w.food_in_cells(), 400 - 4);
}

#[test]
fn permuting_start_poses_permutes_the_episode() {
    let net = genome(5);
    for seed in 0..5 {
        let row = random_row(seed);
        let mut perm: Vec<usize> = (0..ROBOTS).collect();
        perm.rotate_left(3);
        perm.swap(0, 7);
        let mut shuffled = row[..2].to_vec();
        for &p in &perm {
            shuffled.extend_from_slice(&row[2 + 3 * p..5 + 3 * p]);
        }

        let env = Swarm::new(300).unwrap();
        let (fa, fra) = env.run_episode_traced(&net, &row).unwrap();
        let (fb, frb) = env.run_episode_traced(&net, &shuffled).unwrap();
        assert_eq!(fa, fb);
        for (a, b) in fra.iter().zip(&frb) {
            for (k, &p) in perm.iter().enumerate() {
                assert_eq!(a.robots[p], b.robots[k]);
            }
        }
    }
}

#[test]
fn episodes_are_deterministic() {
    let env = Swarm::new(200).unwrap();
    let row = random_row(11);
    let net = genome(2);
    assert_eq!(env.run_episode_traced(&net, &row).unwrap(), env.run_episode_traced(&net, &row).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn robots_stay_inside_and_apart(seed in 0u64..10_000, wseed in 0u64..100) {
        let mut w = World::from_conditions(&random_row(seed)).unwrap();
        let mut brains = vec![genome(wseed); ROBOTS];
        for b in &mut brains {
            b.reset();
        }
        let mut controls = vec![[0.5; 4]; ROBOTS];
        for _ in 0..150 {
            for (i, (b, c)) in brains.iter_mut().zip(controls.iter_mut()).enumerate() {
                b.act(&w.sense(i), c);
            }
            w.step(&controls);
            for (i, r) in w.robots.iter().enumerate() {
                prop_assert!(r.x >= ROBOT_RADIUS && r.x <= ARENA - ROBOT_RADIUS);
                prop_assert!(r.y >= ROBOT_RADIUS && r.y <= ARENA - ROBOT_RADIUS);
                for o in &w.robots[i + 1..] {
                    prop_assert!((r.x - o.x).hypot(r.y - o.y) >= 2.0 * ROBOT_RADIUS - 1e-12);
                }
                if (r.x - w.nest.0).hypot(r.y - w.nest.1) <= NEST_RADIUS {
                    prop_assert_eq!(r.energy(), 1.0);
                    prop_assert_eq!(r.carried, 0);
                }
            }
        }
    }

    #[test]
    fn food_cells_only_empty(seed in 0u64..10_000) {
        let mut w = World::from_conditions(&random_row(seed)).unwrap();
        let cells = (ARENA / CELL) as usize;
        let mut previous: Vec<bool> = (0..cells * cells).map(|c| w.has_food(c)).collect();
        for k in 0..100 {
            let c = [(k % 7) as f64 / 6.0, (k % 5) as f64 / 4.0, 0.0, 1.0];
            w.step(&vec![c; ROBOTS]);
            let now: Vec<bool> = (0..cells * cells).map(|c| w.has_food(c)).collect();
            prop_assert!(previous.iter().zip(&now).all(|(a, b)| *a || !*b));
            previous = now;
        }
    }
}
