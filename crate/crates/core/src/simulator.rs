//! Seeded trajectories and Monte Carlo replications.
//!
//! Each step draws the action from the policy stream, the next state by
//! inverse CDF on one uniform of the transition stream and the reward by
//! inverse CDF on one uniform of the reward stream. Replications are seeded
//! with [`rng::split`] and reduced in replication order, so summaries do not
//! depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{self, analyze, instances, validate_spec, Chain, ChainAnalysis, ChainError, ChainSpec};
use crate::design::{self, sae_variance};
use crate::estimators::{self, EstimatorError, StepRecord, SufficientStats};
use crate::online::{Eti2Config, EtiConfig, OnlineEti, OnlineEti2};
use crate::policies::{self, KappaVector, Policy, PolicyConfig, PolicyError};
use crate::rng::{self, Streams};
use crate::stats;

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Any design the simulator can run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Static(PolicyConfig),
    OnlineEti(EtiConfig),
    OnlineEti2(Eti2Config),
}

impl Design {
    pub fn build(&self, n_states: usize) -> Result<Box<dyn Policy>, PolicyError> {
        match self {
            Design::Static(p) => p.build(n_states),
            Design::OnlineEti(c) => Ok(Box::new(OnlineEti::new(n_states, c.clone())?)),
            Design::OnlineEti2(c) => Ok(Box::new(OnlineEti2::new(n_states, c.clone())?)),
        }
    }

    /// The adaptive regenerative design must start at its regeneration state.
    pub fn forced_start(&self) -> Option<usize> {
        match self {
            Design::OnlineEti2(c) => Some(c.xr),
            _ => None,
        }
    }
}

impl From<PolicyConfig> for Design {
    fn from(p: PolicyConfig) -> Self {
        Design::Static(p)
    }
}

fn default_x0() -> usize {
    0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Steps per trajectory.
    pub n: u64,
    #[serde(default = "default_x0")]
    pub x0: usize,
    /// Record a checkpoint every this many steps; 0 disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Stop early once the design reports this many completed cycles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after_cycles: Option<u64>,
}

impl RunConfig {
    pub fn steps(n: u64) -> Self {
        RunConfig {
            n,
            x0: 0,
            checkpoint_every: 0,
            stop_after_cycles: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub alpha_hat_mle: f64,
    pub alpha_hat_sae: f64,
    pub gamma_hat: KappaVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub j_step: Option<u64>,
    pub solver_failures: u64,
    pub switches: u64,
    /// `Σ_j I(X_j = x)(I(A_j = 1) − p_j(1, x))` per state.
    pub decision_martingale: Vec<f64>,
    /// Visits `M_n(x)` per state.
    pub visits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_policy: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    /// Steps simulated.
    pub n: u64,
    pub alpha_hat_mle: f64,
    pub alpha_hat_sae: f64,
    /// Per-chain estimates using the true kernels, `[α̂(1), α̂(2)]`.
    pub alpha_hat_known_chain: [f64; 2],
    /// Per-chain plug-in estimates from each chain's own samples, once that
    /// chain's estimated kernel is irreducible.
    pub alpha_hat_chain_mle: [Option<f64>; 2],
    pub gamma_hat: KappaVector,
    pub checkpoints: Vec<Checkpoint>,
    pub diagnostics: Diagnostics,
}

impl RunResult {
    /// Known-kernel treatment-effect estimate.
    pub fn alpha_hat_known(&self) -> f64 {
        self.alpha_hat_known_chain[1] - self.alpha_hat_known_chain[0]
    }
}

/// Cumulative transition rows for inverse-CDF sampling.
#[derive(Clone, Debug)]
struct Sampler {
    n: usize,
    cdf: Vec<f64>,
}

fn cdf_row(p: &nalgebra::DMatrix<f64>, x: usize) -> Vec<f64> {
    let n = p.ncols();
    let mut acc = 0.0;
    let mut row: Vec<f64> = (0..n)
        .map(|y| {
            acc += p[(x, y)];
            acc
        })
        .collect();
    // Pin the last reachable entry to 1 so rounding never leaves a gap.
    if let Some(last) = (0..n).rev().find(|&y| p[(x, y)] > 0.0) {
        row[last..].iter_mut().for_each(|v| *v = 1.0);
    }
    row
}

#[inline]
fn invert(row: &[f64], u: f64) -> usize {
    row.iter().position(|&c| u < c).unwrap_or(row.len() - 1)
}

impl Sampler {
    fn new(spec: &ChainSpec) -> Self {
        let n = spec.n_states();
        let mut cdf = Vec::with_capacity(2 * n * n);
        for c in Chain::BOTH {
            for x in 0..n {
                cdf.extend(cdf_row(spec.transition(c), x));
            }
        }
        Sampler { n, cdf }
    }

    #[inline]
    fn step(&self, spec: &ChainSpec, chain: Chain, x: usize, s: &mut Streams) -> (usize, f64) {
        let base = (chain.index() * self.n + x) * self.n;
        let y = invert(&self.cdf[base..base + self.n], rng::uniform(&mut s.transition));
        let r = spec.reward(chain, x, y).quantile(rng::uniform(&mut s.reward));
        (y, r)
    }
}

/// One transition from `x` under `chain`: next state by inverse CDF on the
/// transition stream, reward by inverse CDF on the reward stream.
pub fn sample_step(spec: &ChainSpec, chain: Chain, x: usize, streams: &mut Streams) -> (usize, f64) {
    let row = cdf_row(spec.transition(chain), x);
    let y = invert(&row, rng::uniform(&mut streams.transition));
    let r = spec.reward(chain, x, y).quantile(rng::uniform(&mut streams.reward));
    (y, r)
}

/// A spec, a design and run settings, validated once and reusable across
/// replications.
#[derive(Clone, Debug)]
pub struct Simulation {
    spec: ChainSpec,
    design: Design,
    config: RunConfig,
    sampler: Sampler,
    analysis: ChainAnalysis,
}

impl Simulation {
    pub fn new(spec: ChainSpec, design: Design, config: RunConfig) -> Result<Self, SimulationError> {
        let n_states = spec.n_states();
        if config.n == 0 {
            return Err(SimulationError::InvalidConfig("n must be at least 1".into()));
        }
        if config.x0 >= n_states {
            return Err(SimulationError::InvalidConfig(format!(
                "initial state {} out of range",
                config.x0
            )));
        }
        design.build(n_states)?;
        let analysis = analyze(&spec)?;
        Ok(Simulation {
            sampler: Sampler::new(&spec),
            spec,
            design,
            config,
            analysis,
        })
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn analysis(&self) -> &ChainAnalysis {
        &self.analysis
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn checkpoint(&self, stats: &SufficientStats, policy: &dyn Policy) -> Checkpoint {
        Checkpoint {
            n: stats.n(),
            alpha_hat_mle: estimators::mle_alpha_only(stats),
            alpha_hat_sae: estimators::sae_alpha(stats),
            gamma_hat: policies::empirical_limits(stats),
            policy: policy.snapshot(),
        }
    }

    /// One trajectory.
    pub fn run(&self, seed: u64) -> Result<RunResult, SimulationError> {
        let n_states = self.spec.n_states();
        let mut policy = self.design.build(n_states)?;
        let mut streams = Streams::new(seed);
        let mut stats = SufficientStats::new(n_states);
        let mut martingale = vec![0.0; n_states];
        let mut checkpoints = Vec::new();
        let mut switches = 0;
        let mut last_action = None;
        let mut x = self.design.forced_start().unwrap_or(self.config.x0);
        for step in 1..=self.config.n {
            let d = policy.decide(x, rng::uniform(&mut streams.policy))?;
            let (y, reward) = self.sampler.step(&self.spec, d.action, x, &mut streams);
            let rec = StepRecord {
                step,
                prev_state: x,
                action: d.action,
                reward,
                next_state: y,
            };
            stats.update(&rec)?;
            policy.observe(&rec);
            let hit = if d.action == Chain::One { 1.0 } else { 0.0 };
            martingale[x] += hit - d.p_first;
            if last_action.is_some_and(|a| a != d.action) {
                switches += 1;
            }
            last_action = Some(d.action);
            x = y;
            if self.config.checkpoint_every > 0 && step % self.config.checkpoint_every == 0 {
                checkpoints.push(self.checkpoint(&stats, policy.as_ref()));
            }
            if let (Some(m), Some(done)) = (self.config.stop_after_cycles, policy.cycles()) {
                if done >= m {
                    break;
                }
            }
        }
        if self.config.checkpoint_every > 0
            && checkpoints.last().map(|c| c.n) != Some(stats.n())
        {
            checkpoints.push(self.checkpoint(&stats, policy.as_ref()));
        }
        let known = |c: Chain| {
            estimators::known_transition_chain_alpha(&stats, self.analysis.pi(c), c)
        };
        Ok(RunResult {
            seed,
            n: stats.n(),
            alpha_hat_mle: estimators::mle_alpha_only(&stats),
            alpha_hat_sae: estimators::sae_alpha(&stats),
            alpha_hat_known_chain: [known(Chain::One), known(Chain::Two)],
            alpha_hat_chain_mle: Chain::BOTH.map(|c| estimators::single_chain_alpha(&stats, c)),
            gamma_hat: policies::empirical_limits(&stats),
            checkpoints,
            diagnostics: Diagnostics {
                j_step: stats.j_step(),
                solver_failures: policy.solver_failures(),
                switches,
                decision_martingale: martingale,
                visits: (0..n_states).map(|x| stats.visits(x)).collect(),
                cycles: policy.cycles(),
                final_policy: policy.snapshot(),
            },
        })
    }

    /// Runs replications `0..reps` with seeds `split(base_seed, i)`, in
    /// replication order.
    pub fn replicate(
        &self,
        reps: usize,
        base_seed: u64,
        threads: Option<usize>,
    ) -> Result<Vec<RunResult>, SimulationError> {
        let work = || {
            (0..reps as u64)
                .into_par_iter()
                .map(|i| self.run(rng::split(base_seed, i)))
                .collect::<Result<Vec<_>, _>>()
        };
        match threads {
            Some(t) => rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| SimulationError::ThreadPool(e.to_string()))?
                .install(work),
            None => work(),
        }
    }

    pub fn monte_carlo(
        &self,
        reps: usize,
        base_seed: u64,
        threads: Option<usize>,
    ) -> Result<McSummary, SimulationError> {
        if reps < 2 {
            return Err(SimulationError::InvalidConfig("need at least two replications".into()));
        }
        let runs = self.replicate(reps, base_seed, threads)?;
        Ok(McSummary::from_runs(&runs, self.analysis.treatment_effect, base_seed))
    }
}

pub fn run(spec: &ChainSpec, design: &Design, config: &RunConfig, seed: u64) -> Result<RunResult, SimulationError> {
    Simulation::new(spec.clone(), design.clone(), config.clone())?.run(seed)
}

pub fn monte_carlo(
    spec: &ChainSpec,
    design: &Design,
    config: &RunConfig,
    reps: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<McSummary, SimulationError> {
    Simulation::new(spec.clone(), design.clone(), config.clone())?.monte_carlo(reps, base_seed, threads)
}

/// Spread of one estimator across replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub bias: f64,
    /// `n` times the sample variance across replications.
    pub scaled_var: f64,
    pub scaled_var_ci_half_width: f64,
    pub scaled_var_ci: [f64; 2],
}

impl EstimatorSummary {
    pub fn from_values(values: &[f64], n: f64, truth: f64) -> Self {
        let mean = stats::mean(values);
        let v = stats::variance_with_ci(values);
        let (scaled, half) = (n * v.variance, n * v.half_width);
        EstimatorSummary {
            mean,
            bias: mean - truth,
            scaled_var: scaled,
            scaled_var_ci_half_width: half,
            scaled_var_ci: [scaled - half, scaled + half],
        }
    }

    /// Standard error of the mean, `sqrt(scaled_var / n / reps)`.
    pub fn mean_standard_error(&self, n: f64, reps: usize) -> f64 {
        (self.scaled_var / n / reps as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub reps: usize,
    /// Steps per replication (mean when runs stop early).
    pub n: f64,
    pub base_seed: u64,
    pub alpha: f64,
    pub mle: EstimatorSummary,
    pub sae: EstimatorSummary,
    pub known_transition: EstimatorSummary,
    pub gamma_hat_mean: KappaVector,
}

impl McSummary {
    pub fn from_runs(runs: &[RunResult], alpha: f64, base_seed: u64) -> Self {
        let reps = runs.len();
        let n = runs.iter().map(|r| r.n as f64).sum::<f64>() / reps as f64;
        let collect = |f: &dyn Fn(&RunResult) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let n_states = runs[0].gamma_hat.n_states();
        let mut gamma = [vec![0.0; n_states], vec![0.0; n_states]];
        for r in runs {
            for (acc, v) in gamma.iter_mut().zip(&r.gamma_hat.values) {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            }
        }
        gamma.iter_mut().flatten().for_each(|v| *v /= reps as f64);
        McSummary {
            reps,
            n,
            base_seed,
            alpha,
            mle: EstimatorSummary::from_values(&collect(&|r| r.alpha_hat_mle), n, alpha),
            sae: EstimatorSummary::from_values(&collect(&|r| r.alpha_hat_sae), n, alpha),
            known_transition: EstimatorSummary::from_values(&collect(&|r| r.alpha_hat_known()), n, alpha),
            gamma_hat_mean: KappaVector {
                values: gamma,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CltEstimator {
    Mle,
    Sae,
}

/// Predicted scaled asymptotic variance of a static design with known
/// limits: the plug-in MLE formula at the design's limits, or for the SAE
/// under a regenerative design `σ̄²(1)/q + σ̄²(2)/(1 − q)`.
pub fn predicted_variance(
    spec: &ChainSpec,
    analysis: &ChainAnalysis,
    policy: &PolicyConfig,
    estimator: CltEstimator,
) -> Result<f64, SimulationError> {
    let (p1, p2) = (spec.transition(Chain::One), spec.transition(Chain::Two));
    match (policy, estimator) {
        (PolicyConfig::StationaryMarkov { p_first }, CltEstimator::Mle) => {
            let k = policies::kappa_from_markov(p_first, p1, p2)?;
            design::mle_variance(&k, &analysis.pi, &analysis.sigma2)
                .map_err(|e| SimulationError::InvalidConfig(e.to_string()))
        }
        (PolicyConfig::Regenerative { xr, pr }, est) => {
            let q = policies::q_from_p(*pr, analysis.eta(Chain::One, *xr), analysis.eta(Chain::Two, *xr));
            match est {
                CltEstimator::Sae => Ok(sae_variance(
                    q,
                    analysis.sigma_bar(Chain::One),
                    analysis.sigma_bar(Chain::Two),
                )),
                CltEstimator::Mle => {
                    let p = policies::regenerative_markov_equivalent(q, &analysis.pi[0], &analysis.pi[1]);
                    let k = policies::kappa_from_markov(&p, p1, p2)?;
                    design::mle_variance(&k, &analysis.pi, &analysis.sigma2)
                        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))
                }
            }
        }
        _ => Err(SimulationError::InvalidConfig(
            "variance prediction needs a stationary Markov design (MLE) or a regenerative design".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub estimator: CltEstimator,
    pub predicted_scaled_var: f64,
    pub summary: EstimatorSummary,
    /// Empirical over predicted scaled variance.
    pub variance_ratio: f64,
    /// Anderson–Darling statistic of the standardized `√n(α̂ − α)` values.
    pub anderson_darling: f64,
    pub normality_rejected_5pct: bool,
}

/// Compares the replication distribution of `√n(α̂ − α)` with its normal limit.
pub fn clt_report(
    spec: &ChainSpec,
    policy: &PolicyConfig,
    estimator: CltEstimator,
    config: &RunConfig,
    reps: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<CltReport, SimulationError> {
    let sim = Simulation::new(spec.clone(), Design::Static(policy.clone()), config.clone())?;
    let predicted = predicted_variance(spec, sim.analysis(), policy, estimator)?;
    let runs = sim.replicate(reps, base_seed, threads)?;
    let alpha = sim.analysis().treatment_effect;
    let values: Vec<f64> = runs
        .iter()
        .map(|r| match estimator {
            CltEstimator::Mle => r.alpha_hat_mle,
            CltEstimator::Sae => r.alpha_hat_sae,
        })
        .collect();
    let n = config.n as f64;
    let summary = EstimatorSummary::from_values(&values, n, alpha);
    let scaled: Vec<f64> = values.iter().map(|v| n.sqrt() * (v - alpha)).collect();
    let ad = stats::anderson_darling_normal(&scaled);
    Ok(CltReport {
        estimator,
        predicted_scaled_var: predicted,
        variance_ratio: summary.scaled_var / predicted,
        summary,
        anderson_darling: ad,
        normality_rejected_5pct: ad > 0.752,
    })
}

/// Two opposite deterministic `s`-cycles with Bernoulli rewards when leaving
/// state 0.
pub fn coop_example_spec(s: usize, q1: f64, q2: f64) -> Result<ChainSpec, SimulationError> {
    if s < 2 || !(q1 > 0.0 && q1 < 1.0 && q2 > 0.0 && q2 < 1.0) {
        return Err(SimulationError::InvalidConfig(
            "need s >= 2 and reward probabilities in (0, 1)".into(),
        ));
    }
    validate_spec(&instances::coop_raw(s, q1, q2))
        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))
}

/// The cooperative design for [`coop_example_spec`].
pub fn coop_designed_policy(_s: usize) -> PolicyConfig {
    PolicyConfig::CoopAlternating
}

/// One comparison row for the cycle instance. Variances are reported on the
/// normalized scale `s² · n · Var(α̂)`. The designed policy never makes either
/// estimated kernel irreducible, so its estimate uses the known kernels; the
/// isolation baseline differences the two single-chain plug-in estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoopRow {
    pub s: usize,
    pub designed: EstimatorSummary,
    pub isolation: EstimatorSummary,
    /// Isolation over designed normalized variance.
    pub ratio: f64,
    /// Regularized optimal-design variance on the same normalized scale.
    pub optimal_regularized: f64,
}

/// Designed policy versus running each chain alone for `n` steps.
pub fn coop_comparison(
    s: usize,
    q1: f64,
    q2: f64,
    n: u64,
    reps: usize,
    base_seed: u64,
    threads: Option<usize>,
) -> Result<CoopRow, SimulationError> {
    let spec = coop_example_spec(s, q1, q2)?;
    let config = RunConfig::steps(n);
    let designed = Simulation::new(spec.clone(), Design::Static(coop_designed_policy(s)), config.clone())?;
    let alone = |c: Chain| Simulation::new(spec.clone(), Design::Static(PolicyConfig::SingleChain { chain: c }), config.clone());
    let (first, second) = (alone(Chain::One)?, alone(Chain::Two)?);
    let alpha = designed.analysis().treatment_effect;
    let scale = (s * s) as f64;

    let d_runs = designed.replicate(reps, base_seed, threads)?;
    // Separate seed families keep the isolation runs independent of the
    // designed runs and of each other.
    let i1 = first.replicate(reps, rng::split(base_seed, u64::MAX), threads)?;
    let i2 = second.replicate(reps, rng::split(base_seed, u64::MAX - 1), threads)?;

    let normalized = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|a| a * s as f64).collect() };
    let d_vals = normalized(d_runs.iter().map(RunResult::alpha_hat_known).collect());
    let i_vals = i1
        .iter()
        .zip(&i2)
        .map(|(a, b)| match (a.alpha_hat_chain_mle[0], b.alpha_hat_chain_mle[1]) {
            (Some(x), Some(y)) => Ok(y - x),
            _ => Err(SimulationError::InvalidConfig(
                "isolation run too short to visit every state".into(),
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let i_vals = normalized(i_vals);
    let n_f = n as f64;
    let designed_summary = EstimatorSummary::from_values(&d_vals, n_f, alpha * s as f64);
    let isolation_summary = EstimatorSummary::from_values(&i_vals, n_f, alpha * s as f64);
    let analysis = designed.analysis();
    let optimal = design::optimal_design(&spec, analysis)
        .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
    Ok(CoopRow {
        s,
        ratio: isolation_summary.scaled_var / designed_summary.scaled_var,
        designed: designed_summary,
        isolation: isolation_summary,
        optimal_regularized: optimal.objective * scale,
    })
}

/// Scaled single-chain variance helper re-exported for reports.
pub fn single_chain_variance(spec: &ChainSpec, chain: Chain) -> Result<f64, ChainError> {
    chain::single_chain_clt_variance(spec.transition(chain), &spec.mean_reward(chain))
}
