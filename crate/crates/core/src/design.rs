//! Variance-optimal designs.
//!
//! The scaled asymptotic variance of the plug-in MLE under a policy with
//! limits `κ` is `Σ_{ℓ,x} π(ℓ,x)² σ²(ℓ,x) / κ(ℓ,x)`. Minimizing it over the
//! polytope `K` of feasible limits gives the optimal Markov design; restricting
//! to regenerative policies gives a one-dimensional problem with a closed form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{Chain, ChainAnalysis, ChainSpec};
use crate::linalg;
use crate::policies::{self, KappaVector};

/// Default floor applied to zero per-state variances before solving.
pub const SIGMA2_FLOOR: f64 = 1e-6;

/// `σ̄(ℓ)` at or below this is treated as zero (rounding residue of an
/// exactly deterministic chain).
pub const DEGENERATE_SIGMA: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("policy limit is zero at chain {chain}, state {state} where the variance weight is positive")]
    DivisionByZeroMass { chain: Chain, state: usize },
    #[error("could not construct a strictly positive feasible starting point")]
    InfeasibleStart,
    #[error("solver did not converge within {0} Newton iterations")]
    MaxIterations(usize),
    #[error("chain {0} has zero average variance")]
    DegenerateChain(Chain),
    #[error("singular Newton system")]
    SingularSystem,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Optimal Markov design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub kappa_star: KappaVector,
    /// Induced Markov probabilities `p*(ℓ, x)`, indexed `[chain][state]`.
    pub p_star: [Vec<f64>; 2],
    /// Optimal scaled asymptotic variance.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Set when zero variances were floored before solving.
    pub regularized: bool,
}

/// Optimal regenerative design at a fixed regeneration state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerativeDesign {
    pub xr: usize,
    /// Long-run fraction of time on chain 1.
    pub q_star: f64,
    /// Probability of choosing chain 1 at each regeneration.
    pub p_star: f64,
    pub variance: f64,
    /// Induced limits `κ(1,x) = q π(1,x)`, `κ(2,x) = (1 − q) π(2,x)`.
    pub kappa: KappaVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceGapReport {
    pub markov_variance: f64,
    pub markov_regularized: bool,
    pub regenerative_variance: f64,
    /// Regenerative over Markov optimum; at least 1 up to solver tolerance.
    pub ratio: f64,
}

/// Solver knobs.
#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Zero variances are raised to this value and the result flagged.
    pub sigma2_floor: f64,
    /// Strictly positive feasible start; defaults to the limits of the
    /// uniform Markov policy.
    pub warm_start: Option<KappaVector>,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            sigma2_floor: SIGMA2_FLOOR,
            warm_start: None,
            max_iterations: 500,
        }
    }
}

/// `Σ_{ℓ,x} π(ℓ,x)² σ²(ℓ,x) / κ(ℓ,x)`, with `0/0` read as 0.
pub fn mle_variance(
    kappa: &KappaVector,
    pi: &[Vec<f64>; 2],
    sigma2: &[Vec<f64>; 2],
) -> Result<f64, DesignError> {
    let mut total = 0.0;
    for c in Chain::BOTH {
        let i = c.index();
        for x in 0..kappa.n_states() {
            let num = pi[i][x] * pi[i][x] * sigma2[i][x];
            if num == 0.0 {
                continue;
            }
            let k = kappa.get(c, x);
            if k <= 0.0 {
                return Err(DesignError::DivisionByZeroMass { chain: c, state: x });
            }
            total += num / k;
        }
    }
    Ok(total)
}

/// `σ̄²(1)/q + σ̄²(2)/(1 − q)`, taking `σ̄(ℓ)` (not squared).
pub fn sae_variance(q: f64, sigma_bar1: f64, sigma_bar2: f64) -> f64 {
    sigma_bar1 * sigma_bar1 / q + sigma_bar2 * sigma_bar2 / (1.0 - q)
}

/// Equality constraints `A κ = b` of `K` in chain-major layout: balance rows
/// for all but the last state (the dropped row is implied by the others), then
/// the mass row.
fn constraints(p1: &DMatrix<f64>, p2: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = p1.nrows();
    let mats = [p1, p2];
    let mut a = DMatrix::zeros(n, 2 * n);
    for y in 0..n - 1 {
        for c in 0..2 {
            for x in 0..n {
                let col = c * n + x;
                a[(y, col)] -= mats[c][(x, y)];
                if x == y {
                    a[(y, col)] += 1.0;
                }
            }
        }
    }
    for col in 0..2 * n {
        a[(n - 1, col)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    (a, b)
}

/// Norm of the gradient component orthogonal to the row space of `a`.
fn projected_gradient_norm(a: &DMatrix<f64>, grad: &DVector<f64>) -> f64 {
    let aat = a * a.transpose();
    let rhs = a * grad;
    match linalg::solve(&aat, &rhs) {
        Some(lambda) => (grad - a.transpose() * lambda).amax(),
        None => f64::INFINITY,
    }
}

/// Minimizes `Σ c_i / κ_i − μ Σ log κ_i` on `{A κ = b}` by Newton's method
/// with a backtracking line search; `μ = 0` is the unbarriered objective.
fn newton_stage(
    kappa: &mut DVector<f64>,
    c: &DVector<f64>,
    mu: f64,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    budget: &mut usize,
    iterations: &mut usize,
) -> Result<(), DesignError> {
    let m = kappa.len();
    let k = a.nrows();
    let value = |v: &DVector<f64>| -> f64 {
        v.iter()
            .zip(c.iter())
            .map(|(x, ci)| ci / x - if mu > 0.0 { mu * x.ln() } else { 0.0 })
            .sum()
    };
    loop {
        if *budget == 0 {
            return Err(DesignError::MaxIterations(*iterations));
        }
        *budget -= 1;
        *iterations += 1;
        let grad = DVector::from_fn(m, |i, _| -c[i] / (kappa[i] * kappa[i]) - mu / kappa[i]);
        let hess = DVector::from_fn(m, |i, _| {
            2.0 * c[i] / kappa[i].powi(3) + mu / (kappa[i] * kappa[i])
        });
        // KKT system [H Aᵀ; A 0] [d; w] = [−g; b − Aκ]; the second block
        // removes any drift off the affine set.
        let mut kkt = DMatrix::zeros(m + k, m + k);
        for i in 0..m {
            kkt[(i, i)] = hess[i];
        }
        kkt.view_mut((m, 0), (k, m)).copy_from(a);
        kkt.view_mut((0, m), (m, k)).copy_from(&a.transpose());
        let mut rhs = DVector::zeros(m + k);
        rhs.rows_mut(0, m).copy_from(&(-&grad));
        rhs.rows_mut(m, k).copy_from(&(b - a * &*kappa));
        let sol = linalg::solve(&kkt, &rhs).ok_or(DesignError::SingularSystem)?;
        let step = sol.rows(0, m).into_owned();
        let decrement: f64 = step
            .iter()
            .zip(hess.iter())
            .map(|(d, h)| d * d * h)
            .sum();
        let f0 = value(kappa);
        if decrement / 2.0 <= 1e-20 * (1.0 + f0.abs()) {
            return Ok(());
        }
        let relative_step = (0..m).fold(0.0f64, |r, i| r.max((step[i] / kappa[i]).abs()));
        if relative_step <= 1e-13 {
            *kappa += &step;
            return Ok(());
        }
        let mut t = 1.0;
        while (0..m).any(|i| kappa[i] + t * step[i] <= 0.0) {
            t *= 0.5;
        }
        let slope = grad.dot(&step);
        // Slack of a few ulps so that rounding near the optimum cannot stall
        // the search.
        let slack = 1e-15 * f0.abs();
        loop {
            let trial = &*kappa + t * &step;
            if value(&trial) <= f0 + 0.25 * t * slope + slack {
                *kappa = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-14 {
                return Ok(());
            }
        }
    }
}

/// Optimal Markov design with default options.
pub fn solve_optimal_kappa(
    pi: &[Vec<f64>; 2],
    sigma2: &[Vec<f64>; 2],
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> Result<DesignSolution, DesignError> {
    solve_optimal_kappa_with(pi, sigma2, p1, p2, &SolverOptions::default())
}

/// Minimizes `Σ π²σ²/κ` over `K`.
///
/// The objective is strictly convex and blows up at the boundary whenever all
/// weights are positive, so the minimizer is interior. A short log-barrier
/// path is followed from the start point, then the barrier is dropped and
/// Newton polishes on the objective alone.
pub fn solve_optimal_kappa_with(
    pi: &[Vec<f64>; 2],
    sigma2: &[Vec<f64>; 2],
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<DesignSolution, DesignError> {
    let n = p1.nrows();
    if p2.nrows() != n || pi.iter().chain(sigma2).any(|v| v.len() != n) {
        return Err(DesignError::DimensionMismatch(format!(
            "expected {n} states in every input"
        )));
    }
    let mut regularized = false;
    let weights: Vec<f64> = (0..2)
        .flat_map(|c| (0..n).map(move |x| (c, x)))
        .map(|(c, x)| {
            let mut s2 = sigma2[c][x];
            if s2 < opts.sigma2_floor {
                regularized = true;
                s2 = opts.sigma2_floor;
            }
            pi[c][x] * pi[c][x] * s2
        })
        .collect();
    let c = DVector::from_vec(weights);

    let start = match &opts.warm_start {
        Some(k) if k.n_states() == n && k.min_entry() > 0.0 => k.clone(),
        _ => policies::kappa_from_markov(&vec![0.5; n], p1, p2)
            .map_err(|_| DesignError::InfeasibleStart)?,
    };
    if start.min_entry() <= 0.0 {
        return Err(DesignError::InfeasibleStart);
    }
    let (a, b) = constraints(p1, p2);
    let mut kappa = DVector::from_vec(start.to_flat());
    let mut budget = opts.max_iterations;
    let mut iterations = 0;

    // Barrier weight relative to the objective scale; decimated tenfold per
    // stage until the barrier's duality gap `2n·μ` is negligible.
    let scale = c.sum().max(f64::MIN_POSITIVE);
    let mut mu = 1e-2 * scale;
    while 2.0 * n as f64 * mu > 1e-10 * scale {
        newton_stage(&mut kappa, &c, mu, &a, &b, &mut budget, &mut iterations)?;
        mu *= 0.1;
    }
    newton_stage(&mut kappa, &c, 0.0, &a, &b, &mut budget, &mut iterations)?;

    let grad = DVector::from_fn(2 * n, |i, _| -c[i] / (kappa[i] * kappa[i]));
    let kkt_residual = projected_gradient_norm(&a, &grad);
    let objective = kappa.iter().zip(c.iter()).map(|(k, w)| w / k).sum();
    let kappa_star = KappaVector::from_flat(kappa.as_slice());
    let p1_star = policies::markov_from_kappa(&kappa_star).map_err(|_| DesignError::InfeasibleStart)?;
    let p2_star = p1_star.iter().map(|p| 1.0 - p).collect();
    Ok(DesignSolution {
        kappa_star,
        p_star: [p1_star, p2_star],
        objective,
        kkt_residual,
        iterations,
        regularized,
    })
}

/// Optimal Markov design for a validated spec and its analysis.
pub fn optimal_design(
    spec: &ChainSpec,
    analysis: &ChainAnalysis,
) -> Result<DesignSolution, DesignError> {
    solve_optimal_kappa(
        &analysis.pi,
        &analysis.sigma2,
        spec.transition(Chain::One),
        spec.transition(Chain::Two),
    )
}

/// Optimal stationary regenerative design at `xr`.
pub fn optimal_regenerative(
    analysis: &ChainAnalysis,
    xr: usize,
) -> Result<RegenerativeDesign, DesignError> {
    if xr >= analysis.n_states {
        return Err(DesignError::DimensionMismatch(format!(
            "regeneration state {xr} out of range"
        )));
    }
    let s1 = analysis.sigma_bar(Chain::One);
    let s2 = analysis.sigma_bar(Chain::Two);
    for (c, s) in [(Chain::One, s1), (Chain::Two, s2)] {
        if !(s > DEGENERATE_SIGMA) {
            return Err(DesignError::DegenerateChain(c));
        }
    }
    let q_star = s1 / (s1 + s2);
    let e1 = analysis.eta(Chain::One, xr);
    let e2 = analysis.eta(Chain::Two, xr);
    let p_star = e2 * s1 / (e2 * s1 + e1 * s2);
    let kappa = KappaVector::new(
        analysis.pi[0].iter().map(|v| q_star * v).collect(),
        analysis.pi[1].iter().map(|v| (1.0 - q_star) * v).collect(),
    );
    Ok(RegenerativeDesign {
        xr,
        q_star,
        p_star,
        variance: (s1 + s2) * (s1 + s2),
        kappa,
    })
}

/// Compares the optimal Markov and regenerative designs.
pub fn variance_gap_report(
    spec: &ChainSpec,
    analysis: &ChainAnalysis,
    xr: usize,
) -> Result<VarianceGapReport, DesignError> {
    let markov = optimal_design(spec, analysis)?;
    let regen = optimal_regenerative(analysis, xr)?;
    Ok(VarianceGapReport {
        markov_variance: markov.objective,
        markov_regularized: markov.regularized,
        regenerative_variance: regen.variance,
        ratio: regen.variance / markov.objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{analyze, instances, validate_spec, Labels, RawChainSpec, RewardDist, RewardEntry};
    use crate::policies::{kappa_from_markov, kappa_membership};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Grid search over two-state Markov policies with closed-form mixture
    /// stationary distributions; independent of the solver and of
    /// `kappa_from_markov`.
    fn grid_oracle(pi: &[Vec<f64>; 2], s2: &[Vec<f64>; 2], p1: &DMatrix<f64>, p2: &DMatrix<f64>) -> f64 {
        let w = |c: usize, x: usize| pi[c][x] * pi[c][x] * s2[c][x];
        let mut best = f64::INFINITY;
        let steps = ((0.99 - 0.01) / 0.002_f64).round() as usize;
        for i in 0..=steps {
            let a = 0.01 + 0.002 * i as f64;
            for j in 0..=steps {
                let b = 0.01 + 0.002 * j as f64;
                let q01 = a * p1[(0, 1)] + (1.0 - a) * p2[(0, 1)];
                let q10 = b * p1[(1, 0)] + (1.0 - b) * p2[(1, 0)];
                let z0 = q10 / (q01 + q10);
                let z1 = 1.0 - z0;
                let v = w(0, 0) / (z0 * a)
                    + w(0, 1) / (z1 * b)
                    + w(1, 0) / (z0 * (1.0 - a))
                    + w(1, 1) / (z1 * (1.0 - b));
                best = best.min(v);
            }
        }
        best
    }

    fn random_two_state(rng: &mut ChaCha8Rng) -> ChainSpec {
        let row = |rng: &mut ChaCha8Rng| {
            let a: f64 = rng.random_range(0.05..0.95);
            vec![a, 1.0 - a]
        };
        let mut rewards: [Vec<RewardEntry>; 2] = [Vec::new(), Vec::new()];
        for r in rewards.iter_mut() {
            for x in 0..2 {
                for y in 0..2 {
                    let lo: f64 = rng.random_range(-1.0..1.0);
                    let w: f64 = rng.random_range(0.1..2.0);
                    r.push(RewardEntry {
                        x,
                        y,
                        dist: RewardDist::Uniform { a: lo, b: lo + w },
                    });
                }
            }
        }
        let raw = RawChainSpec {
            n_states: 2,
            transition: [
                vec![row(rng), row(rng)],
                vec![row(rng), row(rng)],
            ],
            rewards,
            default_reward: None,
            labels: Labels::default(),
        };
        validate_spec(&raw).unwrap()
    }

    fn random_spec(rng: &mut ChaCha8Rng, n: usize) -> ChainSpec {
        let row = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let transition = [
            (0..n).map(|_| row(rng)).collect(),
            (0..n).map(|_| row(rng)).collect(),
        ];
        let mut rewards: [Vec<RewardEntry>; 2] = [Vec::new(), Vec::new()];
        for r in rewards.iter_mut() {
            for x in 0..n {
                for y in 0..n {
                    let lo: f64 = rng.random_range(-1.0..1.0);
                    r.push(RewardEntry {
                        x,
                        y,
                        dist: RewardDist::Uniform { a: lo, b: lo + 0.5 },
                    });
                }
            }
        }
        validate_spec(&RawChainSpec {
            n_states: n,
            transition,
            rewards,
            default_reward: None,
            labels: Labels::default(),
        })
        .unwrap()
    }

    fn solve(spec: &ChainSpec) -> (ChainAnalysis, DesignSolution) {
        let a = analyze(spec).unwrap();
        let d = optimal_design(spec, &a).unwrap();
        (a, d)
    }

    #[test]
    fn mle_variance_examples() {
        let k = KappaVector::new(vec![0.25; 2], vec![0.25; 2]);
        let zero = [vec![0.0; 2], vec![0.0; 2]];
        let pi = [vec![0.5; 2], vec![0.5; 2]];
        assert_eq!(mle_variance(&k, &pi, &zero).unwrap(), 0.0);

        let spec = instances::w2();
        let a = analyze(&spec).unwrap();
        let k = kappa_from_markov(&[0.5, 0.5], spec.transition(Chain::One), spec.transition(Chain::Two)).unwrap();
        // Mixture kernel at p = 0.5: rows (0.7, 0.3) and (0.35, 0.65), so
        // ζ = (7/13, 6/13) and κ(ℓ, x) = ζ(x)/2.
        let z = [7.0 / 13.0, 6.0 / 13.0];
        let pi1 = [2.0 / 3.0, 1.0 / 3.0];
        let s1 = [1.0, 16.0 / 9.0];
        let hand = pi1[0] * pi1[0] * s1[0] / (z[0] / 2.0)
            + pi1[1] * pi1[1] * s1[1] / (z[1] / 2.0)
            + 0.25 * 0.25 / (z[0] / 2.0)
            + 0.25 * 0.25 / (z[1] / 2.0);
        let v = mle_variance(&k, &a.pi, &a.sigma2).unwrap();
        assert!((v - hand).abs() < 1e-12, "{v} vs {hand}");

        let doubled = KappaVector::new(
            k.values[0].iter().map(|v| 2.0 * v).collect(),
            k.values[1].iter().map(|v| 2.0 * v).collect(),
        );
        let v2 = mle_variance(&doubled, &a.pi, &a.sigma2).unwrap();
        assert!((v2 - v / 2.0).abs() < 1e-12);

        let hole = KappaVector::new(vec![0.0, 0.5], vec![0.25, 0.25]);
        assert_eq!(
            mle_variance(&hole, &a.pi, &a.sigma2),
            Err(DesignError::DivisionByZeroMass { chain: Chain::One, state: 0 })
        );
    }

    #[test]
    fn sae_variance_examples() {
        let (s1, s2) = ((34.0f64 / 27.0).sqrt(), 0.5);
        assert!((sae_variance(0.5, s1, s2) - (68.0 / 27.0 + 0.5)).abs() < 1e-12);
        let q = s1 / (s1 + s2);
        assert!((sae_variance(q, s1, s2) - (s1 + s2).powi(2)).abs() < 1e-12);
        assert!(sae_variance(1e-12, s1, s2) > 1e11);
    }

    #[test]
    fn symmetric_instance_splits_evenly() {
        let mut raw = instances::w2_raw();
        raw.transition[1] = raw.transition[0].clone();
        raw.rewards[1] = raw.rewards[0].clone();
        let spec = validate_spec(&raw).unwrap();
        let (a, d) = solve(&spec);
        for c in Chain::BOTH {
            for x in 0..2 {
                assert!((d.kappa_star.get(c, x) - a.pi[0][x] / 2.0).abs() < 1e-10);
            }
        }
        assert!(!d.regularized);
    }

    #[test]
    fn w2_matches_grid_oracle() {
        let spec = instances::w2();
        let (a, d) = solve(&spec);
        let oracle = grid_oracle(&a.pi, &a.sigma2, spec.transition(Chain::One), spec.transition(Chain::Two));
        assert!(d.objective <= oracle + 1e-12);
        assert!(oracle - d.objective <= 1e-4, "gap {}", oracle - d.objective);
        assert!(d.kkt_residual <= 1e-8, "kkt {}", d.kkt_residual);
        assert!(kappa_membership(&d.kappa_star, spec.transition(Chain::One), spec.transition(Chain::Two)).passed);
        let direct = mle_variance(&d.kappa_star, &a.pi, &a.sigma2).unwrap();
        assert!((direct - d.objective).abs() <= 1e-10);
    }

    #[test]
    fn random_two_state_match_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let spec = random_two_state(&mut rng);
            let (a, d) = solve(&spec);
            let oracle = grid_oracle(&a.pi, &a.sigma2, spec.transition(Chain::One), spec.transition(Chain::Two));
            assert!(oracle - d.objective <= 1e-4 && d.objective <= oracle + 1e-12);
            assert!(d.kkt_residual <= 1e-8);
        }
    }

    #[test]
    fn beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3, 4, 6] {
            let spec = random_spec(&mut rng, n);
            let (a, d) = solve(&spec);
            assert!(d.kappa_star.min_entry() >= 1e-10);
            for _ in 0..100 {
                let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let k = kappa_from_markov(&p, spec.transition(Chain::One), spec.transition(Chain::Two)).unwrap();
                let v = mle_variance(&k, &a.pi, &a.sigma2).unwrap();
                assert!(d.objective <= v + 1e-9);
            }
        }
    }

    #[test]
    fn swap_equivariance() {
        let spec = instances::w2();
        let (_, d) = solve(&spec);
        let (_, ds) = solve(&spec.swapped());
        for x in 0..2 {
            assert!((d.kappa_star.get(Chain::One, x) - ds.kappa_star.get(Chain::Two, x)).abs() < 1e-12);
            assert!((d.kappa_star.get(Chain::Two, x) - ds.kappa_star.get(Chain::One, x)).abs() < 1e-12);
        }
        assert!((d.objective - ds.objective).abs() < 1e-12);
    }

    #[test]
    fn warm_start_reaches_same_point() {
        let spec = instances::w2();
        let (a, d) = solve(&spec);
        let opts = SolverOptions {
            warm_start: Some(d.kappa_star.clone()),
            ..SolverOptions::default()
        };
        let w = solve_optimal_kappa_with(&a.pi, &a.sigma2, spec.transition(Chain::One), spec.transition(Chain::Two), &opts).unwrap();
        assert!(w.kappa_star.max_abs_diff(&d.kappa_star) < 1e-10);
    }

    #[test]
    fn zero_variance_is_regularized() {
        let spec = validate_spec(&instances::coop_raw(8, 0.5, 0.5)).unwrap();
        let (_, d) = solve(&spec);
        assert!(d.regularized);
        assert!(d.kappa_star.min_entry() > 0.0);
    }

    #[test]
    fn w2_regenerative_design() {
        let a = analyze(&instances::w2()).unwrap();
        let r = optimal_regenerative(&a, 0).unwrap();
        let s1 = (34.0f64 / 27.0).sqrt();
        assert!((a.sigma_bar(Chain::One) - s1).abs() < 1e-12);
        let q = s1 / (s1 + 0.5);
        let p = 2.0 * s1 / (2.0 * s1 + 1.5 * 0.5);
        assert!((r.q_star - q).abs() < 1e-12);
        assert!((r.p_star - p).abs() < 1e-12);
        assert!((r.q_star - 0.6918).abs() < 1e-4);
        assert!((r.p_star - 0.7496).abs() < 1e-4);
        assert!((r.variance - 2.6316).abs() < 5e-4);
        assert!((r.p_star - policies::p_from_q(r.q_star, 1.5, 2.0)).abs() < 1e-12);

        let r2 = optimal_regenerative(&a, 1).unwrap();
        assert_eq!(r.variance, r2.variance);
    }

    #[test]
    fn symmetric_regenerative_design() {
        let mut raw = instances::w2_raw();
        raw.transition[1] = raw.transition[0].clone();
        raw.rewards[1] = raw.rewards[0].clone();
        let a = analyze(&validate_spec(&raw).unwrap()).unwrap();
        let r = optimal_regenerative(&a, 0).unwrap();
        assert!((r.q_star - 0.5).abs() < 1e-12 && (r.p_star - 0.5).abs() < 1e-12);
        assert!((r.variance - 4.0 * a.sigma2_bar[0]).abs() < 1e-12);
    }

    #[test]
    fn degenerate_chain_is_reported() {
        let mut raw = instances::w2_raw();
        for e in raw.rewards[0].iter_mut() {
            e.dist = RewardDist::Constant { c: 1.0 };
        }
        let a = analyze(&validate_spec(&raw).unwrap()).unwrap();
        assert_eq!(optimal_regenerative(&a, 0), Err(DesignError::DegenerateChain(Chain::One)));
    }

    #[test]
    fn regenerative_inside_markov() {
        let spec = instances::w2();
        let (a, d) = solve(&spec);
        let r = optimal_regenerative(&a, 0).unwrap();
        assert!(kappa_membership(&r.kappa, spec.transition(Chain::One), spec.transition(Chain::Two)).passed);
        let v = mle_variance(&r.kappa, &a.pi, &a.sigma2).unwrap();
        assert!(v >= d.objective - 1e-9);
        let sae = sae_variance(r.q_star, a.sigma_bar(Chain::One), a.sigma_bar(Chain::Two));
        assert!((v - sae).abs() < 1e-9);
    }

    #[test]
    fn gap_report_examples() {
        let spec = instances::w2();
        let a = analyze(&spec).unwrap();
        assert!(variance_gap_report(&spec, &a, 0).unwrap().ratio >= 1.0 - 1e-9);

        let mut raw = instances::w2_raw();
        raw.transition[1] = raw.transition[0].clone();
        raw.rewards[1] = raw.rewards[0].clone();
        let sym = validate_spec(&raw).unwrap();
        let r = variance_gap_report(&sym, &analyze(&sym).unwrap(), 0).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-9);

        let ratio = |s: usize| {
            let spec = validate_spec(&instances::coop_raw(s, 0.5, 0.5)).unwrap();
            variance_gap_report(&spec, &analyze(&spec).unwrap(), 0).unwrap()
        };
        let (r8, r32) = (ratio(8), ratio(32));
        assert!(r8.markov_regularized);
        assert!(r32.ratio > r8.ratio);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solver_certificate(seed in any::<u64>(), n in 2usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, n);
            let (a, d) = solve(&spec);
            prop_assert!(d.kkt_residual <= 1e-8);
            prop_assert!(d.kappa_star.min_entry() >= 1e-10);
            prop_assert!(kappa_membership(&d.kappa_star, spec.transition(Chain::One), spec.transition(Chain::Two)).passed);
            let r = optimal_regenerative(&a, 0).unwrap();
            prop_assert!(r.variance >= d.objective - 1e-9);
        }
    }
}
