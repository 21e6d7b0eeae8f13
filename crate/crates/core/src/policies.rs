//! Sampling policies and policy-limit bookkeeping.
//!
//! A policy picks, before every transition, which chain drives the system.
//! Long-run visit fractions `γ(ℓ, x) = lim Γ_n(ℓ, x) / n` of any time-average
//! regular policy lie in the polytope
//!
//! ```text
//! K = { κ ≥ 0 : κ(1,y) + κ(2,y) = Σ_{ℓ,x} κ(ℓ,x) P(ℓ,x,y) for all y,  Σ κ = 1 }
//! ```
//!
//! and every strictly positive point of `K` is reached by the stationary Markov
//! policy `p(ℓ, x) = κ(ℓ, x) / (κ(1, x) + κ(2, x))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{self, Chain};
use crate::estimators::{StepRecord, SufficientStats};
use crate::linalg;

pub const BALANCE_TOL: f64 = 1e-9;
pub const MASS_TOL: f64 = 1e-12;
pub const NONNEG_TOL: f64 = -1e-12;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("regenerative policy has no latched action before its first visit to the regeneration state")]
    UninitializedLatch,
    #[error("zero policy mass at state {0}")]
    ZeroMass(usize),
    #[error("mixture kernel is reducible")]
    MixtureReducible,
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
}

/// The chain chosen for the next transition and the probability of chain 1
/// that was used to draw it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyDecision {
    pub action: Chain,
    pub p_first: f64,
}

impl PolicyDecision {
    /// Draws chain 1 iff `u ≤ p_first`.
    #[inline]
    pub fn draw(p_first: f64, u: f64) -> Self {
        let action = if u <= p_first { Chain::One } else { Chain::Two };
        PolicyDecision { action, p_first }
    }

    #[inline]
    pub fn fixed(action: Chain) -> Self {
        let p_first = if action == Chain::One { 1.0 } else { 0.0 };
        PolicyDecision { action, p_first }
    }
}

/// Candidate or realized visit fractions `κ(ℓ, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaVector {
    pub values: [Vec<f64>; 2],
}

impl KappaVector {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Self {
        assert_eq!(first.len(), second.len(), "kappa halves must match");
        KappaVector {
            values: [first, second],
        }
    }

    pub fn n_states(&self) -> usize {
        self.values[0].len()
    }

    #[inline]
    pub fn get(&self, chain: Chain, x: usize) -> f64 {
        self.values[chain.index()][x]
    }

    /// Chain-major flattening: `[κ(1, ·), κ(2, ·)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.values[0].clone();
        v.extend_from_slice(&self.values[1]);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        KappaVector::new(flat[..n].to_vec(), flat[n..].to_vec())
    }

    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Sup-norm distance to another vector.
    pub fn max_abs_diff(&self, other: &KappaVector) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Residuals of the three membership conditions of `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub balance_residual: f64,
    pub mass_error: f64,
    pub min_entry: f64,
    pub passed: bool,
}

pub fn kappa_membership(
    kappa: &KappaVector,
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> MembershipReport {
    let n = kappa.n_states();
    let mats = [p1, p2];
    let mut balance: f64 = 0.0;
    for y in 0..n {
        let inflow: f64 = Chain::BOTH
            .iter()
            .map(|&c| {
                (0..n)
                    .map(|x| kappa.get(c, x) * mats[c.index()][(x, y)])
                    .sum::<f64>()
            })
            .sum();
        let here = kappa.get(Chain::One, y) + kappa.get(Chain::Two, y);
        balance = balance.max((here - inflow).abs());
    }
    let mass_error = (kappa.total() - 1.0).abs();
    let min_entry = kappa.min_entry();
    MembershipReport {
        balance_residual: balance,
        mass_error,
        min_entry,
        passed: balance <= BALANCE_TOL && mass_error <= MASS_TOL && min_entry >= NONNEG_TOL,
    }
}

/// Stationary Markov probabilities of chain 1, `p(1, x) = κ(1, x) / (κ(1, x) + κ(2, x))`.
pub fn markov_from_kappa(kappa: &KappaVector) -> Result<Vec<f64>, PolicyError> {
    (0..kappa.n_states())
        .map(|x| {
            let a = kappa.get(Chain::One, x);
            let b = kappa.get(Chain::Two, x);
            if a + b <= 0.0 {
                Err(PolicyError::ZeroMass(x))
            } else {
                Ok(a / (a + b))
            }
        })
        .collect()
}

/// Policy limits of the stationary Markov policy with chain-1 probabilities
/// `p_first`: `κ(ℓ, x) = ζ(x) p(ℓ, x)` where `ζ` is stationary for the mixture
/// kernel `Q(x, y) = Σ_ℓ p(ℓ, x) P(ℓ, x, y)`.
pub fn kappa_from_markov(
    p_first: &[f64],
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> Result<KappaVector, PolicyError> {
    let n = p1.nrows();
    if p_first.len() != n || p_first.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(PolicyError::InvalidConfig(
            "markov probabilities must be in [0, 1], one per state".into(),
        ));
    }
    let q = DMatrix::from_fn(n, n, |x, y| {
        p_first[x] * p1[(x, y)] + (1.0 - p_first[x]) * p2[(x, y)]
    });
    if !chain::is_irreducible(&q) {
        return Err(PolicyError::MixtureReducible);
    }
    let zeta = linalg::stationary(&q).ok_or(PolicyError::MixtureReducible)?;
    Ok(KappaVector::new(
        (0..n).map(|x| zeta[x] * p_first[x]).collect(),
        (0..n).map(|x| zeta[x] * (1.0 - p_first[x])).collect(),
    ))
}

/// Markov policy with the same limits as a regenerative policy sampling chain 1
/// for a fraction `q` of time: `p(x) = q π(1,x) / (q π(1,x) + (1 − q) π(2,x))`.
pub fn regenerative_markov_equivalent(q: f64, pi1: &[f64], pi2: &[f64]) -> Vec<f64> {
    pi1.iter()
        .zip(pi2)
        .map(|(a, b)| q * a / (q * a + (1.0 - q) * b))
        .collect()
}

/// Long-run time fraction on chain 1 of a stationary regenerative policy that
/// picks chain 1 with probability `p` at each regeneration.
pub fn q_from_p(p: f64, eta1: f64, eta2: f64) -> f64 {
    let a = p * eta1;
    a / (a + (1.0 - p) * eta2)
}

/// Inverse of [`q_from_p`].
pub fn p_from_q(q: f64, eta1: f64, eta2: f64) -> f64 {
    let a = q * eta2;
    a / ((1.0 - q) * eta1 + a)
}

/// Realized visit fractions `Γ_n(ℓ, x) / n`.
pub fn empirical_limits(stats: &SufficientStats) -> KappaVector {
    let n = stats.n_states();
    let total = (stats.n() as f64).max(1.0);
    KappaVector::new(
        (0..n).map(|x| stats.gamma(Chain::One, x) / total).collect(),
        (0..n).map(|x| stats.gamma(Chain::Two, x) / total).collect(),
    )
}

fn default_block_length() -> u64 {
    100
}

/// Static (non-adaptive) sampling designs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Chain 1 with probability `p_first[x]` in state `x`.
    StationaryMarkov { p_first: Vec<f64> },
    /// Switches chains only at `xr`, choosing chain 1 with probability `pr`.
    Regenerative { xr: usize, pr: f64 },
    /// Alternates chains every `block_length` steps, starting with chain 1.
    Switchback {
        #[serde(default = "default_block_length")]
        block_length: u64,
    },
    SingleChain { chain: Chain },
    /// Cooperative design for the opposite-cycles instance: chain 1 in the
    /// last state, chain 2 in the middle states, alternating in state 0.
    CoopAlternating,
}

impl PolicyConfig {
    pub fn validate(&self, n_states: usize) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::InvalidConfig(m.into()));
        match self {
            PolicyConfig::StationaryMarkov { p_first } => {
                if p_first.len() != n_states {
                    return bad("stationary markov policy needs one probability per state");
                }
                if p_first.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("probabilities must lie in [0, 1]");
                }
            }
            PolicyConfig::Regenerative { xr, pr } => {
                if *xr >= n_states {
                    return bad("regeneration state out of range");
                }
                if !(0.0..=1.0).contains(pr) {
                    return bad("regeneration probability must lie in [0, 1]");
                }
            }
            PolicyConfig::Switchback { block_length } => {
                if *block_length == 0 {
                    return bad("switchback block length must be at least 1");
                }
            }
            PolicyConfig::SingleChain { .. } => {}
            PolicyConfig::CoopAlternating => {
                if n_states < 2 {
                    return bad("cooperative design needs at least two states");
                }
            }
        }
        Ok(())
    }

    pub fn build(&self, n_states: usize) -> Result<Box<dyn Policy>, PolicyError> {
        self.validate(n_states)?;
        Ok(match self {
            PolicyConfig::StationaryMarkov { p_first } => Box::new(StationaryMarkov {
                p_first: p_first.clone(),
            }),
            PolicyConfig::Regenerative { xr, pr } => Box::new(Regenerative::new(*xr, *pr)),
            PolicyConfig::Switchback { block_length } => Box::new(Switchback {
                block_length: *block_length,
                steps: 0,
            }),
            PolicyConfig::SingleChain { chain } => Box::new(SingleChain(*chain)),
            PolicyConfig::CoopAlternating => Box::new(CoopAlternating::new(n_states)),
        })
    }
}

/// Step-decision interface shared by static and adaptive designs.
pub trait Policy: Send {
    /// Chooses the chain for the transition out of state `x`, given a uniform
    /// draw `u ∈ [0, 1)` from the policy's randomization stream.
    fn decide(&mut self, x: usize, u: f64) -> Result<PolicyDecision, PolicyError>;

    /// Feeds back the realized transition.
    fn observe(&mut self, _rec: &StepRecord) {}

    /// Design-specific state worth recording at checkpoints.
    fn snapshot(&self) -> Option<serde_json::Value> {
        None
    }

    /// Failed design re-solves, for adaptive designs.
    fn solver_failures(&self) -> u64 {
        0
    }

    /// Completed regeneration cycles, for designs that track them.
    fn cycles(&self) -> Option<u64> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct StationaryMarkov {
    pub p_first: Vec<f64>,
}

impl Policy for StationaryMarkov {
    #[inline]
    fn decide(&mut self, x: usize, u: f64) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision::draw(self.p_first[x], u))
    }
}

/// Switches chains only on visits to `xr`; elsewhere repeats the latched action.
#[derive(Clone, Debug)]
pub struct Regenerative {
    pub xr: usize,
    pub pr: f64,
    latch: Option<Chain>,
    /// When set, a start away from `xr` draws the initial latch as if the
    /// process had just regenerated.
    pub virtual_start: bool,
}

impl Regenerative {
    pub fn new(xr: usize, pr: f64) -> Self {
        Regenerative {
            xr,
            pr,
            latch: None,
            virtual_start: true,
        }
    }

    pub fn latched(&self) -> Option<Chain> {
        self.latch
    }
}

impl Policy for Regenerative {
    #[inline]
    fn decide(&mut self, x: usize, u: f64) -> Result<PolicyDecision, PolicyError> {
        match self.latch {
            Some(a) if x != self.xr => Ok(PolicyDecision::fixed(a)),
            None if x != self.xr && !self.virtual_start => Err(PolicyError::UninitializedLatch),
            _ => {
                let d = PolicyDecision::draw(self.pr, u);
                self.latch = Some(d.action);
                Ok(d)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Switchback {
    pub block_length: u64,
    steps: u64,
}

impl Policy for Switchback {
    #[inline]
    fn decide(&mut self, _x: usize, _u: f64) -> Result<PolicyDecision, PolicyError> {
        let block = self.steps / self.block_length;
        self.steps += 1;
        Ok(PolicyDecision::fixed(if block.is_multiple_of(2) {
            Chain::One
        } else {
            Chain::Two
        }))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SingleChain(pub Chain);

impl Policy for SingleChain {
    #[inline]
    fn decide(&mut self, _x: usize, _u: f64) -> Result<PolicyDecision, PolicyError> {
        Ok(PolicyDecision::fixed(self.0))
    }
}

#[derive(Clone, Debug)]
pub struct CoopAlternating {
    n_states: usize,
    next_at_origin: Chain,
}

impl CoopAlternating {
    pub fn new(n_states: usize) -> Self {
        CoopAlternating {
            n_states,
            next_at_origin: Chain::One,
        }
    }
}

impl Policy for CoopAlternating {
    #[inline]
    fn decide(&mut self, x: usize, _u: f64) -> Result<PolicyDecision, PolicyError> {
        let action = if x == 0 {
            let a = self.next_at_origin;
            self.next_at_origin = a.other();
            a
        } else if x == self.n_states - 1 {
            Chain::One
        } else {
            Chain::Two
        };
        Ok(PolicyDecision::fixed(action))
    }
}

/// Stationary distribution of the mixture kernel induced by Markov
/// probabilities; used by callers that need `ζ` itself.
pub fn mixture_stationary(
    p_first: &[f64],
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> Result<DVector<f64>, PolicyError> {
    let k = kappa_from_markov(p_first, p1, p2)?;
    Ok(DVector::from_fn(p_first.len(), |x, _| {
        k.get(Chain::One, x) + k.get(Chain::Two, x)
    }))
}
