use eti_core::chain::{analyze, instances, validate_spec, Chain, Labels, RawChainSpec, RewardDist, RewardEntry};
use eti_core::design;
use eti_core::policies::{kappa_from_markov, PolicyConfig};
use eti_core::rng::{self, Streams};
use eti_core::simulator::{clt_report, sample_step, CltEstimator, Design, RunConfig, Simulation};

fn markov(p: &[f64]) -> Design {
    Design::Static(PolicyConfig::StationaryMarkov { p_first: p.to_vec() })
}

#[test]
fn single_chain_estimate_covers_truth() {
    let spec = instances::w2();
    let a = analyze(&spec).unwrap();
    let n = 100_000;
    let sim = Simulation::new(
        spec,
        Design::Static(PolicyConfig::SingleChain { chain: Chain::One }),
        RunConfig::steps(n),
    )
    .unwrap();
    let runs = sim.replicate(200, 31, None).unwrap();
    let band = 3.0 * (a.sigma2_bar[0] / n as f64).sqrt();
    let inside = runs
        .iter()
        .filter(|r| (r.alpha_hat_chain_mle[0].unwrap() - 2.0 / 3.0).abs() <= band)
        .count();
    assert!(inside >= 198, "{inside} of 200 inside the band");
    assert!(runs.iter().all(|r| r.alpha_hat_chain_mle[1].is_none()));
}

#[test]
fn fixed_markov_policy_error_is_bounded() {
    let spec = instances::w2();
    let a = analyze(&spec).unwrap();
    let p = [0.3, 0.6];
    let k = kappa_from_markov(&p, spec.transition(Chain::One), spec.transition(Chain::Two)).unwrap();
    let v = design::mle_variance(&k, &a.pi, &a.sigma2).unwrap();
    let n = 100_000;
    let sim = Simulation::new(spec, markov(&p), RunConfig::steps(n)).unwrap();
    let runs = sim.replicate(1000, 5, None).unwrap();
    let band = 4.0 * (v / n as f64).sqrt();
    let inside = runs
        .iter()
        .filter(|r| (r.alpha_hat_mle - a.treatment_effect).abs() <= band)
        .count();
    assert!(inside >= 990, "{inside} of 1000 inside the band");
}

#[test]
fn decision_martingale_stays_small() {
    let spec = instances::w2();
    let designs = [
        (markov(&[0.5, 0.5]), 200, 20_000),
        (Design::OnlineEti(Default::default()), 40, 20_000),
    ];
    for (design, reps, n) in designs {
        let sim = Simulation::new(spec.clone(), design, RunConfig::steps(n)).unwrap();
        let runs = sim.replicate(reps, 8, None).unwrap();
        let ok = runs
            .iter()
            .filter(|r| {
                r.diagnostics
                    .decision_martingale
                    .iter()
                    .zip(&r.diagnostics.visits)
                    .all(|(m, v)| m.abs() <= 5.0 * v.sqrt())
            })
            .count();
        assert!(ok as f64 >= 0.99 * reps as f64, "{ok} of {reps}");
    }
}

/// Two states; chain 1 holds the system in state 0, chain 2 in state 1, and
/// reward is 1 in state 0. Both chains mix slowly.
fn sticky_spec() -> eti_core::ChainSpec {
    let rewards = |_| {
        (0..2)
            .flat_map(|x| {
                (0..2).map(move |y| RewardEntry {
                    x,
                    y,
                    dist: RewardDist::Constant { c: if x == 0 { 1.0 } else { 0.0 } },
                })
            })
            .collect::<Vec<_>>()
    };
    validate_spec(&RawChainSpec {
        n_states: 2,
        transition: [
            vec![vec![0.999, 0.001], vec![0.01, 0.99]],
            vec![vec![0.99, 0.01], vec![0.001, 0.999]],
        ],
        rewards: [rewards(0), rewards(1)],
        default_reward: None,
        labels: Labels::default(),
    })
    .unwrap()
}

#[test]
fn switchback_sample_average_is_biased_under_interference() {
    let spec = sticky_spec();
    let a = analyze(&spec).unwrap();
    assert!((a.treatment_effect - (0.001 / 0.011 - 0.01 / 0.011)).abs() < 1e-12);
    let sim = Simulation::new(
        spec,
        Design::Static(PolicyConfig::Switchback { block_length: 100 }),
        RunConfig::steps(100_000),
    )
    .unwrap();
    let s = sim.monte_carlo(50, 3, None).unwrap();
    let se = s.sae.mean_standard_error(s.n, s.reps);
    assert!(s.sae.bias.abs() > 5.0 * se, "bias {} se {}", s.sae.bias, se);
}

#[test]
fn switchback_switches_every_block() {
    let sim = Simulation::new(
        instances::w2(),
        Design::Static(PolicyConfig::Switchback { block_length: 100 }),
        RunConfig::steps(1000),
    )
    .unwrap();
    assert_eq!(sim.run(1).unwrap().diagnostics.switches, 9);
}

#[test]
fn regenerative_switches_only_at_regeneration_state() {
    let spec = instances::w2();
    let mut policy = PolicyConfig::Regenerative { xr: 0, pr: 0.5 }.build(2).unwrap();
    let mut streams = Streams::new(4);
    let mut x = 0;
    let mut last = None;
    let mut switches = 0;
    for _ in 0..20_000 {
        let d = policy.decide(x, rng::uniform(&mut streams.policy)).unwrap();
        if last.is_some_and(|a| a != d.action) {
            assert_eq!(x, 0, "switch away from the regeneration state");
            switches += 1;
        }
        last = Some(d.action);
        x = sample_step(&spec, d.action, x, &mut streams).0;
    }
    assert!(switches > 100);
}

#[test]
fn summary_is_thread_count_invariant() {
    let sim = Simulation::new(instances::w2(), markov(&[0.5, 0.5]), RunConfig::steps(2_000)).unwrap();
    let one = serde_json::to_string(&sim.monte_carlo(16, 77, Some(1)).unwrap()).unwrap();
    let three = serde_json::to_string(&sim.monte_carlo(16, 77, Some(3)).unwrap()).unwrap();
    assert_eq!(one, three);
}

#[test]
fn sample_average_clt_under_regenerative_design() {
    let spec = instances::w2();
    let r = clt_report(
        &spec,
        &PolicyConfig::Regenerative { xr: 0, pr: 0.5 },
        CltEstimator::Sae,
        &RunConfig::steps(20_000),
        400,
        12,
        None,
    )
    .unwrap();
    let q = 3.0 / 7.0;
    let predicted = (34.0 / 27.0) / q + 0.25 / (1.0 - q);
    assert!((r.predicted_scaled_var - predicted).abs() < 1e-12);
    assert!((r.variance_ratio - 1.0).abs() < 0.2, "ratio {}", r.variance_ratio);
    assert!(!r.normality_rejected_5pct, "AD {}", r.anderson_darling);
}
