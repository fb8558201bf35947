use jante::core_select::select_core;
use jante::diagnostics::{batch_run, check_all};
use jante::distributions::{
    DistributionSpec, Family, GaussianParams, LocationScale, UniformParams,
};
use jante::engine::{run, OutcomeKind, RunConfig};
use jante::geometry::PointConfiguration;
use jante::rng;
use proptest::prelude::*;

fn law(choice: u8, dim: usize) -> DistributionSpec {
    match choice {
        0 => DistributionSpec::uniform_cube(dim),
        1 => DistributionSpec::new(Family::Gaussian(GaussianParams { mean: 0.0, sd: 1.0 }), dim),
        2 => DistributionSpec::new(
            Family::Laplace(LocationScale {
                location: 1.0,
                scale: 2.0,
            }),
            dim,
        ),
        3 => DistributionSpec::new(
            Family::UniformCube(UniformParams {
                low: -3.0,
                high: 5.0,
            }),
            dim,
        ),
        _ if dim == 1 => DistributionSpec::cauchy(0.0, 1.0),
        _ => DistributionSpec::bernoulli(0.5),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn runs_satisfy_every_invariant(
        n in 3usize..9,
        k_frac in 0.0f64..1.0,
        dim in 1usize..4,
        choice in 0u8..6,
        seed in any::<u64>(),
    ) {
        let k = 1 + ((n - 2) as f64 * k_frac) as usize;
        let k = k.min(n - 2);
        let dist = law(choice, dim);
        let dim = dist.dim;
        let mut cfg = RunConfig::new(n, k, dist, seed, 400);
        cfg.dim = dim;
        let traj = run(&cfg).unwrap();
        let rep = check_all(&traj.records, n, k);
        prop_assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        prop_assert_eq!(rep.rejection_triggers.is_some(), 2 * k < n);
        prop_assert_eq!(traj.outcome.phi.is_some(), traj.outcome.kind == OutcomeKind::ConvergedToPoint);
        for w in traj.records.windows(2) {
            prop_assert_eq!(w[1].t, w[0].t + 1);
        }
    }
}

#[test]
fn identical_configs_give_identical_trajectories() {
    let cfg = RunConfig::new(7, 2, DistributionSpec::gaussian(0.0, 1.0, 2), 99, 3000);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a, b);
    let bits = |t: &jante::engine::Trajectory| -> Vec<u64> {
        t.records.iter().map(|r| r.f.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let mut other = cfg.clone();
    other.replica = 1;
    assert_ne!(run(&other).unwrap().records, a.records);
}

/// Transition law of the two-atom chain `{0,0} <-> {1,1}` for N = 4, K = 2,
/// computed by enumerating both draws and every removal pair.
fn flip_probabilities(p: f64) -> (f64, f64) {
    let energy = |xs: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                s += (xs[i] - xs[j]).powi(2);
            }
        }
        s / xs.len() as f64
    };
    let flip_from = |atom: f64| -> f64 {
        let mut total = 0.0;
        for x1 in [0.0, 1.0] {
            for x2 in [0.0, 1.0] {
                let w = |x: f64| if x == 1.0 { p } else { 1.0 - p };
                let pool = [atom, atom, x1, x2];
                let mut kept_sets = Vec::new();
                for a in 0..4 {
                    for b in a + 1..4 {
                        let kept: Vec<f64> = (0..4)
                            .filter(|&i| i != a && i != b)
                            .map(|i| pool[i])
                            .collect();
                        kept_sets.push((energy(&kept), kept));
                    }
                }
                let best = kept_sets
                    .iter()
                    .map(|(e, _)| *e)
                    .fold(f64::INFINITY, f64::min);
                let ties: Vec<_> = kept_sets.iter().filter(|(e, _)| *e == best).collect();
                let flips = ties
                    .iter()
                    .filter(|(_, k)| k.iter().all(|&x| x != atom))
                    .count();
                total += w(x1) * w(x2) * flips as f64 / ties.len() as f64;
            }
        }
        total
    };
    (flip_from(0.0), flip_from(1.0))
}

#[test]
fn chain_oracle_matches_hand_value() {
    assert_eq!(flip_probabilities(0.5), (0.125, 0.125));
    let (a, b) = flip_probabilities(0.3);
    assert!((a - 0.045).abs() < 1e-15 && (b - 0.245).abs() < 1e-15);
}

#[test]
fn biased_bernoulli_flip_rate_matches_chain() {
    let p = 0.3;
    let (a, b) = flip_probabilities(p);
    let rate = 2.0 * a * b / (a + b);
    let (runs, steps) = (40u64, 5000u64);
    let mut cfg = RunConfig::new(4, 2, DistributionSpec::bernoulli(p), 17, steps);
    cfg.oscillation_band = Some((0.25, 0.75));
    let out = batch_run(&cfg, runs, 1).unwrap();
    let flips: u64 = out.runs.iter().map(|r| r.core_changes).sum();
    let expected = rate * (runs * steps) as f64;
    assert!(
        (flips as f64 - expected).abs() < 0.1 * expected,
        "{flips} flips against {expected}"
    );
    assert_eq!(out.summary.outcome_counts["OscillatingCore"], runs);
}

#[test]
fn split_cluster_core_through_public_api() {
    let cfg = PointConfiguration::from_scalars(&[-24.0, -19.0, -14.0, 28.0, 29.0]).unwrap();
    let sel = select_core(&cfg, 3, &mut rng::seeded(0)).unwrap();
    assert_eq!(sel.kept, vec![3, 4]);
    assert!((sel.core_energy - 0.5).abs() < 1e-12);
}
