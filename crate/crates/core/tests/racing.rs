use proptest::prelude::*;
use robevo::env::racing::{race_fitness, race_fitness_with, CarParams, PenaltyForm, Racing};
use robevo::net::Network;
use robevo::Environment;

fn driver(seed: u64) -> Network {
    let topo = Racing::default_track().topology();
    let w = (0..topo.param_count())
        .map(|i| 2.0 * ((i as f64 + 0.5) * (seed as f64 + 1.3)).sin())
        .collect();
    Network::new(topo, w).unwrap()
}

proptest! {
    #[test]
    fn fitness_is_monotone_and_linear(
        d in 0.0f64..1e5,
        n in 1usize..60_000,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        k in 0.0f64..10.0,
        form in prop::sample::select(vec![PenaltyForm::Literal, PenaltyForm::Squared]),
    ) {
        let (lo, hi) = {
            let x = (a * n as f64) as usize;
            let y = (b * n as f64) as usize;
            (x.min(y), x.max(y))
        };
        let f = |o, t| race_fitness_with(form, d, o, n, t);
        prop_assert!(f(hi, false) <= f(lo, false));
        prop_assert!(f(lo, true) <= f(lo, false));
        prop_assert!(f(lo, false) >= 0.0);
        let scaled = race_fitness_with(form, k * d, lo, n, false);
        prop_assert!((scaled - k * f(lo, false)).abs() <= 1e-9 * scaled.abs().max(1.0));
    }
}

#[test]
fn literal_penalty_is_the_default() {
    assert_eq!(race_fitness(1000.0, 100, 50_000, true), 712.5);
}

#[test]
fn short_episodes_are_deterministic_and_bounded() {
    let env = Racing::new(Racing::default_track().track().clone(), CarParams::default(), 3_000).unwrap();
    for seed in 0..6 {
        let net = driver(seed);
        let s0 = [seed as f64 * 211.7 % env.track().length()];
        let (f, rows) = env.run_episode_traced(&net, &s0).unwrap();
        let (g, rows2) = env.run_episode_traced(&net, &s0).unwrap();
        assert_eq!(f, g);
        assert_eq!(rows, rows2);
        let last = rows.last().unwrap().car;
        assert!(last.steps_out <= 3_000);
        assert!(f.is_finite() && f >= 0.0);
        assert!(rows.iter().all(|r| (1..=6).contains(&r.car.gear)));
    }
}
