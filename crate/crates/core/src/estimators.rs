//! Sufficient statistics of a single experiment trajectory and the two
//! treatment-effect estimators built on them.
//!
//! The plug-in MLE estimates each transition matrix from counts, inverts it
//! for a stationary distribution and combines it with per-state mean rewards:
//! `α̂ = π̂(2) r̂(2) − π̂(1) r̂(1)`. Until both estimated matrices are
//! irreducible (the stopping time `J`) it reports `α̂ = 0` with uniform `π̂`.
//!
//! The SAE is the plain difference of per-chain reward averages.

use nalgebra::{DMatrix, DVector};

use crate::chain::{self, Chain};
use crate::linalg;

/// One transition of the experiment: at step `step` the system moved from
/// `prev_state` to `next_state` under chain `action`, paying `reward`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub prev_state: usize,
    pub action: Chain,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("out-of-order step: expected {expected}, got {got}")]
    OutOfOrderStep { expected: u64, got: u64 },
    #[error("state {state} out of range for {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("fundamental matrix of the estimated chain is singular")]
    SingularSystem,
    #[error("inconsistent statistics: {0}")]
    Inconsistent(String),
}

/// Running counts and reward sums.
///
/// Layout: per-(chain, state) arrays are indexed `chain * n + x`, per-transition
/// arrays `(chain * n + x) * n + y`. Counts are stored as `f64` so that
/// synthetic fractional counts can be fed to the estimators directly.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    n_states: usize,
    /// Γ: visits to `x` with chain `ℓ` sampled.
    gamma: Vec<f64>,
    /// Φ: transition counts.
    phi: Vec<f64>,
    /// Θ: reward sums per (ℓ, x).
    theta: Vec<f64>,
    /// Ψ: reward sums per transition.
    psi: Vec<f64>,
    /// Υ: squared-reward sums per transition.
    upsilon: Vec<f64>,
    n: u64,
    /// Step at which both estimated matrices first became irreducible.
    j_step: Option<u64>,
}

impl SufficientStats {
    pub fn new(n_states: usize) -> Self {
        let m = 2 * n_states;
        let t = m * n_states;
        SufficientStats {
            n_states,
            gamma: vec![0.0; m],
            phi: vec![0.0; t],
            theta: vec![0.0; m],
            psi: vec![0.0; t],
            upsilon: vec![0.0; t],
            n: 0,
            j_step: None,
        }
    }

    /// Builds statistics directly from (possibly fractional) aggregates.
    /// `gamma` and `theta` are derived from the per-transition arrays.
    pub fn from_transitions(
        n_states: usize,
        phi: Vec<f64>,
        psi: Vec<f64>,
        upsilon: Vec<f64>,
    ) -> Result<Self, EstimatorError> {
        let t = 2 * n_states * n_states;
        if phi.len() != t || psi.len() != t || upsilon.len() != t {
            return Err(EstimatorError::Inconsistent(format!(
                "per-transition arrays must have length {t}"
            )));
        }
        if phi.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(EstimatorError::Inconsistent("negative count".into()));
        }
        let mut s = SufficientStats::new(n_states);
        for row in 0..2 * n_states {
            let r = row * n_states..(row + 1) * n_states;
            s.gamma[row] = phi[r.clone()].iter().sum();
            s.theta[row] = psi[r].iter().sum();
        }
        s.phi = phi;
        s.psi = psi;
        s.upsilon = upsilon;
        s.n = s.gamma.iter().sum::<f64>().round() as u64;
        if s.both_irreducible() {
            s.j_step = Some(s.n);
        }
        Ok(s)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Number of steps recorded.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// The stopping time `J`, if reached.
    pub fn j_step(&self) -> Option<u64> {
        self.j_step
    }

    pub fn j_reached(&self) -> bool {
        self.j_step.is_some()
    }

    #[inline]
    fn sx(&self, chain: Chain, x: usize) -> usize {
        chain.index() * self.n_states + x
    }

    #[inline]
    fn sxy(&self, chain: Chain, x: usize, y: usize) -> usize {
        (chain.index() * self.n_states + x) * self.n_states + y
    }

    pub fn gamma(&self, chain: Chain, x: usize) -> f64 {
        self.gamma[self.sx(chain, x)]
    }

    pub fn phi(&self, chain: Chain, x: usize, y: usize) -> f64 {
        self.phi[self.sxy(chain, x, y)]
    }

    pub fn theta(&self, chain: Chain, x: usize) -> f64 {
        self.theta[self.sx(chain, x)]
    }

    pub fn psi(&self, chain: Chain, x: usize, y: usize) -> f64 {
        self.psi[self.sxy(chain, x, y)]
    }

    pub fn upsilon(&self, chain: Chain, x: usize, y: usize) -> f64 {
        self.upsilon[self.sxy(chain, x, y)]
    }

    /// `M(x) = Γ(1, x) + Γ(2, x)`, total visits to `x`.
    pub fn visits(&self, x: usize) -> f64 {
        self.gamma[x] + self.gamma[self.n_states + x]
    }

    /// Total samples taken from `chain`.
    pub fn chain_samples(&self, chain: Chain) -> f64 {
        let o = chain.index() * self.n_states;
        self.gamma[o..o + self.n_states].iter().sum()
    }

    /// Total reward collected while sampling `chain`.
    pub fn chain_reward(&self, chain: Chain) -> f64 {
        let o = chain.index() * self.n_states;
        self.theta[o..o + self.n_states].iter().sum()
    }

    fn chain_irreducible(&self, chain: Chain) -> bool {
        let n = self.n_states;
        let o = chain.index() * n * n;
        linalg::strongly_connected(n, |x, y| self.phi[o + x * n + y] > 0.0)
    }

    fn both_irreducible(&self) -> bool {
        Chain::BOTH.iter().all(|&c| self.chain_irreducible(c))
    }

    /// Incorporates one transition.
    ///
    /// The irreducibility test behind `J` only runs before `J`, and only when a
    /// transition is seen for the first time: irreducibility is monotone in the
    /// support of Φ.
    pub fn update(&mut self, rec: &StepRecord) -> Result<(), EstimatorError> {
        if rec.step != self.n + 1 {
            return Err(EstimatorError::OutOfOrderStep {
                expected: self.n + 1,
                got: rec.step,
            });
        }
        for state in [rec.prev_state, rec.next_state] {
            if state >= self.n_states {
                return Err(EstimatorError::StateOutOfRange {
                    state,
                    n_states: self.n_states,
                });
            }
        }
        let i = self.sx(rec.action, rec.prev_state);
        let t = self.sxy(rec.action, rec.prev_state, rec.next_state);
        let new_edge = self.phi[t] == 0.0;
        self.gamma[i] += 1.0;
        self.theta[i] += rec.reward;
        self.phi[t] += 1.0;
        self.psi[t] += rec.reward;
        self.upsilon[t] += rec.reward * rec.reward;
        self.n += 1;
        if new_edge && self.j_step.is_none() && self.both_irreducible() {
            self.j_step = Some(self.n);
        }
        Ok(())
    }
}

/// Functional form of [`SufficientStats::update`].
pub fn stats_update(
    mut stats: SufficientStats,
    rec: &StepRecord,
) -> Result<SufficientStats, EstimatorError> {
    stats.update(rec)?;
    Ok(stats)
}

/// `P̂(ℓ, x, y) = Φ(ℓ, x, y) / max{Γ(ℓ, x), 1}`. Unvisited rows stay zero.
pub fn mle_transition(stats: &SufficientStats) -> [DMatrix<f64>; 2] {
    let n = stats.n_states;
    Chain::BOTH.map(|c| {
        DMatrix::from_fn(n, n, |x, y| stats.phi(c, x, y) / stats.gamma(c, x).max(1.0))
    })
}

/// Stationary distributions of both estimated matrices, or `None` (the
/// pre-`J` case) unless both are irreducible.
pub fn mle_stationary(p_hat: &[DMatrix<f64>; 2]) -> Option<[DVector<f64>; 2]> {
    if !p_hat.iter().all(chain::is_irreducible) {
        return None;
    }
    let a = linalg::stationary(&p_hat[0])?;
    let b = linalg::stationary(&p_hat[1])?;
    Some([a, b])
}

/// Every plug-in quantity the MLE and the adaptive designs use.
#[derive(Clone, Debug, PartialEq)]
pub struct MleEstimate {
    pub p_hat: [DMatrix<f64>; 2],
    pub pi_hat: [DVector<f64>; 2],
    pub r_hat: [DVector<f64>; 2],
    /// Per-transition reward mean, row-major `x * n + y`.
    pub s_hat: [Vec<f64>; 2],
    /// Per-transition reward second moment, row-major `x * n + y`.
    pub t_hat: [Vec<f64>; 2],
    pub gtilde_hat: [DVector<f64>; 2],
    pub sigma2_hat: [DVector<f64>; 2],
    pub alpha_hat: f64,
    /// `π̂(ℓ) r̂(ℓ)` for each chain.
    pub alpha_chain: [f64; 2],
    pub pre_j: bool,
}

fn reward_moments(stats: &SufficientStats) -> ([DVector<f64>; 2], [Vec<f64>; 2], [Vec<f64>; 2]) {
    let n = stats.n_states;
    let r_hat = Chain::BOTH
        .map(|c| DVector::from_fn(n, |x, _| stats.theta(c, x) / stats.gamma(c, x).max(1.0)));
    let s_hat = Chain::BOTH.map(|c| {
        (0..n * n)
            .map(|k| stats.psi(c, k / n, k % n) / stats.phi(c, k / n, k % n).max(1.0))
            .collect::<Vec<_>>()
    });
    let t_hat = Chain::BOTH.map(|c| {
        (0..n * n)
            .map(|k| stats.upsilon(c, k / n, k % n) / stats.phi(c, k / n, k % n).max(1.0))
            .collect::<Vec<_>>()
    });
    (r_hat, s_hat, t_hat)
}

/// Full plug-in estimate: `P̂`, `π̂`, `r̂`, `ŝ`, `t̂`, `ĝ̃ = (I − P̂ + Π̂)⁻¹ r̂`,
/// `σ̂²` and `α̂`.
pub fn mle_alpha(stats: &SufficientStats) -> Result<MleEstimate, EstimatorError> {
    let n = stats.n_states;
    let p_hat = mle_transition(stats);
    let (r_hat, s_hat, t_hat) = reward_moments(stats);
    let stationary = if stats.j_reached() {
        mle_stationary(&p_hat)
    } else {
        None
    };
    let Some(pi_hat) = stationary else {
        return Ok(MleEstimate {
            p_hat,
            pi_hat: [
                DVector::from_element(n, 1.0 / n as f64),
                DVector::from_element(n, 1.0 / n as f64),
            ],
            r_hat: [DVector::zeros(n), DVector::zeros(n)],
            s_hat,
            t_hat,
            gtilde_hat: [DVector::zeros(n), DVector::zeros(n)],
            sigma2_hat: [DVector::zeros(n), DVector::zeros(n)],
            alpha_hat: 0.0,
            alpha_chain: [0.0; 2],
            pre_j: true,
        });
    };
    let mut gtilde_hat = [DVector::zeros(n), DVector::zeros(n)];
    let mut sigma2_hat = [DVector::zeros(n), DVector::zeros(n)];
    for c in Chain::BOTH {
        let i = c.index();
        let p = &p_hat[i];
        let g = linalg::fundamental_solve(p, &pi_hat[i], &r_hat[i])
            .ok_or(EstimatorError::SingularSystem)?;
        let noise = DVector::from_fn(n, |x, _| {
            (0..n)
                .map(|y| {
                    let k = x * n + y;
                    p[(x, y)] * (t_hat[i][k] - s_hat[i][k] * s_hat[i][k])
                })
                .sum::<f64>()
        });
        sigma2_hat[i] = (chain::transition_variance(p, &g) + noise).map(|v| v.max(0.0));
        gtilde_hat[i] = g;
    }
    let alpha_chain = [pi_hat[0].dot(&r_hat[0]), pi_hat[1].dot(&r_hat[1])];
    Ok(MleEstimate {
        p_hat,
        pi_hat,
        r_hat,
        s_hat,
        t_hat,
        gtilde_hat,
        sigma2_hat,
        alpha_hat: alpha_chain[1] - alpha_chain[0],
        alpha_chain,
        pre_j: false,
    })
}

/// Only the treatment-effect estimate; skips the Poisson and variance work.
pub fn mle_alpha_only(stats: &SufficientStats) -> f64 {
    if !stats.j_reached() {
        return 0.0;
    }
    let p_hat = mle_transition(stats);
    let Some(pi) = mle_stationary(&p_hat) else {
        return 0.0;
    };
    let (r_hat, _, _) = reward_moments(stats);
    pi[1].dot(&r_hat[1]) - pi[0].dot(&r_hat[0])
}

/// Plug-in estimate of `α(ℓ)` from the samples of one chain alone, available
/// as soon as that chain's estimated matrix is irreducible.
pub fn single_chain_alpha(stats: &SufficientStats, chain: Chain) -> Option<f64> {
    let n = stats.n_states;
    let p = DMatrix::from_fn(n, n, |x, y| {
        stats.phi(chain, x, y) / stats.gamma(chain, x).max(1.0)
    });
    if !chain::is_irreducible(&p) {
        return None;
    }
    let pi = linalg::stationary(&p)?;
    let r = DVector::from_fn(n, |x, _| stats.theta(chain, x) / stats.gamma(chain, x).max(1.0));
    Some(pi.dot(&r))
}

/// Plug-in estimate of `α(ℓ)` when the kernel is known: `Σ_x π(ℓ, x) r̂(ℓ, x)`.
pub fn known_transition_chain_alpha(stats: &SufficientStats, pi: &[f64], chain: Chain) -> f64 {
    (0..stats.n_states)
        .map(|x| pi[x] * stats.theta(chain, x) / stats.gamma(chain, x).max(1.0))
        .sum()
}

/// Treatment-effect estimate when both kernels are known.
pub fn known_transition_alpha(stats: &SufficientStats, pi: &[Vec<f64>; 2]) -> f64 {
    known_transition_chain_alpha(stats, &pi[1], Chain::Two)
        - known_transition_chain_alpha(stats, &pi[0], Chain::One)
}

/// Sample average estimator: average chain-2 reward minus average chain-1
/// reward, each guarded by `max{1, count}`.
pub fn sae_alpha(stats: &SufficientStats) -> f64 {
    let mean = |c: Chain| stats.chain_reward(c) / stats.chain_samples(c).max(1.0);
    mean(Chain::Two) - mean(Chain::One)
}
