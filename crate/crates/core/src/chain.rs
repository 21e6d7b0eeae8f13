//! The two-chain environment and its closed-form ground truth.
//!
//! A [`ChainSpec`] holds two irreducible transition matrices on a common state
//! space plus a bounded reward distribution for every transition triple
//! `(chain, x, y)`. [`analyze`] derives everything the variance theory needs:
//! stationary distributions, mean rewards, the centered Poisson solution
//! `g̃ = (I − P + Π)⁻¹ r`, per-state variances `σ²(ℓ, x)`, expected return
//! times and the treatment effect `α = α(2) − α(1)`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg;

/// Row sums must be within this distance of one.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Residual bound for the Poisson equation.
pub const POISSON_TOL: f64 = 1e-10;

/// One of the two chains under comparison. Serialized as `1` / `2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Chain {
    One,
    Two,
}

impl Chain {
    pub const BOTH: [Chain; 2] = [Chain::One, Chain::Two];

    /// Zero-based array index.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Chain::One => 0,
            Chain::Two => 1,
        }
    }

    /// One-based label (1 or 2).
    #[inline]
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    #[inline]
    pub fn from_index(i: usize) -> Chain {
        if i == 0 {
            Chain::One
        } else {
            Chain::Two
        }
    }

    pub fn from_label(label: u8) -> Option<Chain> {
        match label {
            1 => Some(Chain::One),
            2 => Some(Chain::Two),
            _ => None,
        }
    }

    #[inline]
    pub fn other(self) -> Chain {
        match self {
            Chain::One => Chain::Two,
            Chain::Two => Chain::One,
        }
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Serialize for Chain {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.label())
    }
}

impl<'de> Deserialize<'de> for Chain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Chain::from_label(v).ok_or_else(|| serde::de::Error::custom("chain must be 1 or 2"))
    }
}

/// Reward distribution attached to a transition. Only bounded families with
/// closed-form moments are supported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardDist {
    Constant {
        c: f64,
    },
    Bernoulli {
        p: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    #[serde(alias = "discrete")]
    DiscreteFinite {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl Default for RewardDist {
    fn default() -> Self {
        RewardDist::Constant { c: 0.0 }
    }
}

impl RewardDist {
    /// Checks parameters; returns a human-readable reason on failure.
    pub fn check(&self) -> Result<(), String> {
        match self {
            RewardDist::Constant { c } => {
                if !c.is_finite() {
                    return Err(format!("constant reward {c} is unbounded"));
                }
            }
            RewardDist::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(format!("bernoulli probability {p} outside [0, 1]"));
                }
            }
            RewardDist::Uniform { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err("uniform support is unbounded".into());
                }
                if a > b {
                    return Err(format!("uniform support [{a}, {b}] is empty"));
                }
            }
            RewardDist::DiscreteFinite { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err("discrete distribution needs matching non-empty values/probs".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err("discrete distribution has an unbounded value".into());
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err("discrete probability outside [0, 1]".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(format!("discrete probabilities sum to {total}"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            RewardDist::Constant { c } => *c,
            RewardDist::Bernoulli { p } => *p,
            RewardDist::Uniform { a, b } => 0.5 * (a + b),
            RewardDist::DiscreteFinite { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            RewardDist::Constant { .. } => 0.0,
            RewardDist::Bernoulli { p } => p * (1.0 - p),
            RewardDist::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            RewardDist::DiscreteFinite { values, probs } => {
                let m = self.mean();
                values
                    .iter()
                    .zip(probs)
                    .map(|(v, p)| p * (v - m) * (v - m))
                    .sum()
            }
        }
    }

    /// Closed interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            RewardDist::Constant { c } => (*c, *c),
            RewardDist::Bernoulli { p } => {
                if *p == 0.0 {
                    (0.0, 0.0)
                } else if *p == 1.0 {
                    (1.0, 1.0)
                } else {
                    (0.0, 1.0)
                }
            }
            RewardDist::Uniform { a, b } => (*a, *b),
            RewardDist::DiscreteFinite { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(*v), hi.max(*v))
                }),
        }
    }

    /// Generalized inverse CDF `F⁻¹(v) = inf{z : F(z) ≥ v}` for `v ∈ [0, 1)`.
    #[inline]
    pub fn quantile(&self, v: f64) -> f64 {
        match self {
            RewardDist::Constant { c } => *c,
            RewardDist::Bernoulli { p } => {
                if v < 1.0 - p {
                    0.0
                } else {
                    1.0
                }
            }
            RewardDist::Uniform { a, b } => a + v * (b - a),
            RewardDist::DiscreteFinite { values, probs } => {
                // Values are taken in ascending order so that this is a CDF inverse.
                let mut order: Vec<usize> = (0..values.len()).collect();
                order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
                let mut acc = 0.0;
                for &i in &order {
                    acc += probs[i];
                    if v < acc {
                        return values[i];
                    }
                }
                order
                    .iter()
                    .rev()
                    .find(|&&i| probs[i] > 0.0)
                    .map(|&i| values[i])
                    .unwrap_or(values[order[order.len() - 1]])
            }
        }
    }
}

/// Free-text names for chains and states.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
}

/// A reward assignment for one transition `(x, y)` of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEntry {
    pub x: usize,
    pub y: usize,
    pub dist: RewardDist,
}

/// Unvalidated chain specification as read from an external document.
#[derive(Clone, Debug, PartialEq)]
pub struct RawChainSpec {
    pub n_states: usize,
    pub transition: [Vec<Vec<f64>>; 2],
    pub rewards: [Vec<RewardEntry>; 2],
    /// Used for positive-probability transitions without an explicit entry.
    /// `None` makes such transitions a validation error.
    pub default_reward: Option<RewardDist>,
    pub labels: Labels,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("chain {chain}: row {row} is not stochastic (sum = {sum})")]
    NotStochastic { chain: Chain, row: usize, sum: f64 },
    #[error("chain {chain}: entry ({row}, {col}) = {value} outside [0, 1]")]
    NegativeEntry {
        chain: Chain,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("chain {chain}: transition matrix is reducible")]
    Reducible { chain: Chain },
    #[error("chain {chain}: no reward for positive-probability transition ({x}, {y})")]
    MissingReward { chain: Chain, x: usize, y: usize },
    #[error("invalid reward distribution: {reason}")]
    InvalidDistribution { reason: String },
}

/// All problems found while validating a [`RawChainSpec`].
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ValidationErrors(pub Vec<SpecError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "invalid chain spec: {}", msgs.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("transition matrix is not irreducible")]
    NotIrreducible,
    #[error("linear system is numerically singular")]
    SingularSystem,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A validated two-chain environment. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    n: usize,
    transition: [DMatrix<f64>; 2],
    /// Indexed by `(chain * n + x) * n + y`.
    rewards: Vec<RewardDist>,
    labels: Labels,
}

/// Validates a raw spec, collecting every violation found.
pub fn validate_spec(raw: &RawChainSpec) -> Result<ChainSpec, ValidationErrors> {
    let n = raw.n_states;
    let mut errors = Vec::new();
    if n == 0 {
        return Err(ValidationErrors(vec![SpecError::Shape(
            "n_states must be positive".into(),
        )]));
    }
    let mut mats: Vec<DMatrix<f64>> = Vec::with_capacity(2);
    for chain in Chain::BOTH {
        let rows = &raw.transition[chain.index()];
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            errors.push(SpecError::Shape(format!(
                "chain {chain}: transition matrix must be {n}x{n}"
            )));
            mats.push(DMatrix::zeros(n, n));
            continue;
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let mut shape_ok = true;
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    shape_ok = false;
                    errors.push(SpecError::NegativeEntry {
                        chain,
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                shape_ok = false;
                errors.push(SpecError::NotStochastic { chain, row: i, sum });
            }
        }
        if shape_ok && !is_irreducible(&m) {
            errors.push(SpecError::Reducible { chain });
        }
        mats.push(m);
    }

    let mut rewards: Vec<Option<RewardDist>> = vec![None; 2 * n * n];
    for chain in Chain::BOTH {
        for entry in &raw.rewards[chain.index()] {
            if entry.x >= n || entry.y >= n {
                errors.push(SpecError::Shape(format!(
                    "chain {chain}: reward entry ({}, {}) out of range",
                    entry.x, entry.y
                )));
                continue;
            }
            if let Err(reason) = entry.dist.check() {
                errors.push(SpecError::InvalidDistribution {
                    reason: format!("chain {chain} ({}, {}): {reason}", entry.x, entry.y),
                });
            }
            rewards[(chain.index() * n + entry.x) * n + entry.y] = Some(entry.dist.clone());
        }
    }
    if let Some(d) = &raw.default_reward {
        if let Err(reason) = d.check() {
            errors.push(SpecError::InvalidDistribution {
                reason: format!("default reward: {reason}"),
            });
        }
    }
    let mut filled = Vec::with_capacity(2 * n * n);
    for chain in Chain::BOTH {
        for x in 0..n {
            for y in 0..n {
                let slot = rewards[(chain.index() * n + x) * n + y].take();
                let positive = mats[chain.index()][(x, y)] > 0.0;
                let dist = match (slot, &raw.default_reward) {
                    (Some(d), _) => d,
                    (None, Some(d)) => d.clone(),
                    (None, None) => {
                        if positive {
                            errors.push(SpecError::MissingReward { chain, x, y });
                        }
                        RewardDist::default()
                    }
                };
                filled.push(dist);
            }
        }
    }

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }
    let p2 = mats.pop().expect("two matrices");
    let p1 = mats.pop().expect("two matrices");
    Ok(ChainSpec {
        n,
        transition: [p1, p2],
        rewards: filled,
        labels: raw.labels.clone(),
    })
}

impl ChainSpec {
    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn transition(&self, chain: Chain) -> &DMatrix<f64> {
        &self.transition[chain.index()]
    }

    pub fn reward(&self, chain: Chain, x: usize, y: usize) -> &RewardDist {
        &self.rewards[(chain.index() * self.n + x) * self.n + y]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// `r(ℓ, x) = Σ_y P(ℓ, x, y) · E[R | ℓ, x, y]`.
    pub fn mean_reward(&self, chain: Chain) -> DVector<f64> {
        let p = self.transition(chain);
        DVector::from_fn(self.n, |x, _| {
            (0..self.n)
                .map(|y| p[(x, y)] * self.reward(chain, x, y).mean())
                .sum()
        })
    }

    /// `Σ_y P(ℓ, x, y) · Var(R | ℓ, x, y)` for every `x`.
    pub fn reward_noise(&self, chain: Chain) -> DVector<f64> {
        let p = self.transition(chain);
        DVector::from_fn(self.n, |x, _| {
            (0..self.n)
                .map(|y| p[(x, y)] * self.reward(chain, x, y).variance())
                .sum()
        })
    }

    /// Back to the unvalidated form, with every reward listed explicitly.
    pub fn to_raw(&self) -> RawChainSpec {
        let n = self.n;
        let transition = Chain::BOTH.map(|c| {
            let p = self.transition(c);
            (0..n)
                .map(|i| (0..n).map(|j| p[(i, j)]).collect())
                .collect()
        });
        let rewards = Chain::BOTH.map(|c| {
            let mut v = Vec::with_capacity(n * n);
            for x in 0..n {
                for y in 0..n {
                    v.push(RewardEntry {
                        x,
                        y,
                        dist: self.reward(c, x, y).clone(),
                    });
                }
            }
            v
        });
        RawChainSpec {
            n_states: n,
            transition,
            rewards,
            default_reward: None,
            labels: self.labels.clone(),
        }
    }

    /// Relabels states: old state `x` becomes `perm[x]`.
    pub fn permuted(&self, perm: &[usize]) -> ChainSpec {
        let n = self.n;
        assert_eq!(perm.len(), n, "permutation length");
        let transition = Chain::BOTH.map(|c| {
            let p = self.transition(c);
            let mut q = DMatrix::zeros(n, n);
            for x in 0..n {
                for y in 0..n {
                    q[(perm[x], perm[y])] = p[(x, y)];
                }
            }
            q
        });
        let mut rewards = vec![RewardDist::default(); 2 * n * n];
        for c in Chain::BOTH {
            for x in 0..n {
                for y in 0..n {
                    rewards[(c.index() * n + perm[x]) * n + perm[y]] =
                        self.reward(c, x, y).clone();
                }
            }
        }
        ChainSpec {
            n,
            transition,
            rewards,
            labels: Labels::default(),
        }
    }

    /// Exchanges the roles of the two chains.
    pub fn swapped(&self) -> ChainSpec {
        let n = self.n;
        let (first, second) = self.rewards.split_at(n * n);
        let mut rewards = second.to_vec();
        rewards.extend_from_slice(first);
        ChainSpec {
            n,
            transition: [self.transition[1].clone(), self.transition[0].clone()],
            rewards,
            labels: self.labels.clone(),
        }
    }
}

/// True iff the graph with edges `{(x, y) : m[x, y] > 0}` is strongly connected.
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    m.is_square() && linalg::strongly_connected(m.nrows(), |x, y| m[(x, y)] > 0.0)
}

/// Unique stationary distribution of an irreducible stochastic matrix.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>, ChainError> {
    if !is_irreducible(p) {
        return Err(ChainError::NotIrreducible);
    }
    linalg::stationary(p).ok_or(ChainError::SingularSystem)
}

/// Centered Poisson solution `g̃ = (I − P + eπ)⁻¹ r`, the unique solution of
/// `(I − P) g = r − (πr) e` with `π g = π r`.
pub fn poisson_solve(p: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>, ChainError> {
    if r.len() != p.nrows() {
        return Err(ChainError::DimensionMismatch {
            expected: p.nrows(),
            got: r.len(),
        });
    }
    let pi = stationary_distribution(p)?;
    linalg::fundamental_solve(p, &pi, r).ok_or(ChainError::SingularSystem)
}

/// `Σ_y P(x, y) [g(y) − (Pg)(x)]²` for every `x`: the one-step conditional
/// variance of `g(X₁)` given `X₀ = x`.
pub(crate) fn transition_variance(p: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let n = p.nrows();
    let pg = p * g;
    DVector::from_fn(n, |x, _| {
        (0..n)
            .map(|y| {
                let d = g[y] - pg[x];
                p[(x, y)] * d * d
            })
            .sum()
    })
}

/// Per-state variance `σ²(ℓ, x)` of `g̃(ℓ, X₁) + R₁` given `X₀ = x` under chain `ℓ`.
pub fn state_variance(spec: &ChainSpec, chain: Chain) -> Result<DVector<f64>, ChainError> {
    let p = spec.transition(chain);
    let g = poisson_solve(p, &spec.mean_reward(chain))?;
    Ok(transition_variance(p, &g) + spec.reward_noise(chain))
}

/// Asymptotic variance `π g̃² − π (P g̃)²` of `n^{-1/2} Σ r(X_j)` for a single chain.
pub fn single_chain_clt_variance(p: &DMatrix<f64>, r: &DVector<f64>) -> Result<f64, ChainError> {
    let pi = stationary_distribution(p)?;
    let g = linalg::fundamental_solve(p, &pi, r).ok_or(ChainError::SingularSystem)?;
    let pg = p * &g;
    let v: f64 = (0..p.nrows())
        .map(|x| pi[x] * (g[x] * g[x] - pg[x] * pg[x]))
        .sum();
    Ok(v.max(0.0))
}

/// Closed-form ground truth for a spec. Vectors are indexed `[chain][state]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainAnalysis {
    pub n_states: usize,
    pub pi: [Vec<f64>; 2],
    pub mean_reward: [Vec<f64>; 2],
    pub gtilde: [Vec<f64>; 2],
    pub sigma2: [Vec<f64>; 2],
    pub sigma2_bar: [f64; 2],
    /// Expected return time to each state.
    pub eta: [Vec<f64>; 2],
    pub alpha: [f64; 2],
    pub treatment_effect: f64,
}

impl ChainAnalysis {
    pub fn pi(&self, chain: Chain) -> &[f64] {
        &self.pi[chain.index()]
    }

    pub fn sigma2(&self, chain: Chain) -> &[f64] {
        &self.sigma2[chain.index()]
    }

    pub fn eta(&self, chain: Chain, x: usize) -> f64 {
        self.eta[chain.index()][x]
    }

    /// `σ̄(ℓ)`, the square root of the π-weighted state variance.
    pub fn sigma_bar(&self, chain: Chain) -> f64 {
        self.sigma2_bar[chain.index()].sqrt()
    }
}

pub fn analyze(spec: &ChainSpec) -> Result<ChainAnalysis, ChainError> {
    let mut pi = [Vec::new(), Vec::new()];
    let mut mean_reward = [Vec::new(), Vec::new()];
    let mut gtilde = [Vec::new(), Vec::new()];
    let mut sigma2 = [Vec::new(), Vec::new()];
    let mut sigma2_bar = [0.0; 2];
    let mut eta = [Vec::new(), Vec::new()];
    let mut alpha = [0.0; 2];
    for chain in Chain::BOTH {
        let i = chain.index();
        let p = spec.transition(chain);
        let st = stationary_distribution(p)?;
        let r = spec.mean_reward(chain);
        let g = linalg::fundamental_solve(p, &st, &r).ok_or(ChainError::SingularSystem)?;
        let s2: DVector<f64> = (transition_variance(p, &g) + spec.reward_noise(chain))
            .map(|v| v.max(0.0));
        alpha[i] = st.dot(&r);
        sigma2_bar[i] = st.dot(&s2);
        eta[i] = st.iter().map(|v| 1.0 / v).collect();
        pi[i] = st.iter().copied().collect();
        mean_reward[i] = r.iter().copied().collect();
        gtilde[i] = g.iter().copied().collect();
        sigma2[i] = s2.iter().copied().collect();
    }
    Ok(ChainAnalysis {
        n_states: spec.n_states(),
        pi,
        mean_reward,
        gtilde,
        sigma2,
        sigma2_bar,
        eta,
        alpha,
        treatment_effect: alpha[1] - alpha[0],
    })
}

/// Convenience constructors for the small instances used in tests and demos.
pub mod instances {
    use super::*;

    fn dense(n: usize, rows: &[&[f64]]) -> Vec<Vec<f64>> {
        assert_eq!(rows.len(), n);
        rows.iter().map(|r| r.to_vec()).collect()
    }

    fn state_rewards(n: usize, per_state: &[RewardDist]) -> Vec<RewardEntry> {
        let mut v = Vec::new();
        for x in 0..n {
            for y in 0..n {
                v.push(RewardEntry {
                    x,
                    y,
                    dist: per_state[x].clone(),
                });
            }
        }
        v
    }

    /// The two-state reference instance: chain 1 is `[[0.9, 0.1], [0.2, 0.8]]`
    /// paying 1 when leaving state 0 and 0 when leaving state 1; chain 2 is the
    /// uniform kernel with Bernoulli(0.5) rewards everywhere.
    pub fn w2_raw() -> RawChainSpec {
        RawChainSpec {
            n_states: 2,
            transition: [
                dense(2, &[&[0.9, 0.1], &[0.2, 0.8]]),
                dense(2, &[&[0.5, 0.5], &[0.5, 0.5]]),
            ],
            rewards: [
                state_rewards(
                    2,
                    &[RewardDist::Constant { c: 1.0 }, RewardDist::Constant { c: 0.0 }],
                ),
                state_rewards(
                    2,
                    &[
                        RewardDist::Bernoulli { p: 0.5 },
                        RewardDist::Bernoulli { p: 0.5 },
                    ],
                ),
            ],
            default_reward: None,
            labels: Labels {
                chains: vec!["control".into(), "treatment".into()],
                states: vec!["s1".into(), "s2".into()],
            },
        }
    }

    pub fn w2() -> ChainSpec {
        validate_spec(&w2_raw()).expect("reference instance is valid")
    }

    /// Two opposite deterministic `s`-cycles; chain `ℓ` earns Bernoulli(`q_ℓ`)
    /// only when leaving state 0.
    pub fn coop_raw(s: usize, q1: f64, q2: f64) -> RawChainSpec {
        assert!(s >= 2, "cycle length must be at least 2");
        let mut forward = vec![vec![0.0; s]; s];
        let mut backward = vec![vec![0.0; s]; s];
        for x in 0..s {
            forward[x][(x + 1) % s] = 1.0;
            backward[x][(x + s - 1) % s] = 1.0;
        }
        let entry = |q: f64, y: usize| RewardEntry {
            x: 0,
            y,
            dist: RewardDist::Bernoulli { p: q },
        };
        RawChainSpec {
            n_states: s,
            transition: [forward, backward],
            rewards: [vec![entry(q1, 1 % s)], vec![entry(q2, s - 1)]],
            default_reward: Some(RewardDist::Constant { c: 0.0 }),
            labels: Labels::default(),
        }
    }
}
