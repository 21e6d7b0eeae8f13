//! Adaptive designs that learn the optimal allocation while experimenting.
//!
//! [`OnlineEti`] re-estimates the plug-in model, re-solves the optimal Markov
//! design and samples chain `ℓ` in state `x` with probability
//!
//! ```text
//! (1 − M(x)^−β) · κ̂(ℓ,x) / (κ̂(1,x) + κ̂(2,x)) + ½ M(x)^−β
//! ```
//!
//! where `M(x)` counts visits to `x`. [`OnlineEti2`] is the regenerative
//! analogue: it switches chains only at `x^r`, estimating per-chain cycle
//! means and variances, and picks chain 1 at each regeneration with a
//! floored plug-in of the optimal regenerative probability.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chain::Chain;
use crate::design::{self, SolverOptions};
use crate::estimators::{self, StepRecord, SufficientStats};
use crate::policies::{KappaVector, Policy, PolicyDecision, PolicyError};

/// When [`OnlineEti`] re-solves its design.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolveSchedule {
    /// After every post-`J` step.
    EveryStep,
    /// When `J` is reached and whenever the visit count of the state just
    /// left reaches a power of two.
    #[default]
    Pow2,
}

fn default_beta() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtiConfig {
    /// Exploration exponent in `(0, 1)`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub resolve: ResolveSchedule,
}

impl Default for EtiConfig {
    fn default() -> Self {
        EtiConfig {
            beta: default_beta(),
            resolve: ResolveSchedule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eti2Config {
    pub xr: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn check_beta(beta: f64) -> Result<(), PolicyError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(PolicyError::InvalidConfig(format!(
            "exploration exponent must lie in (0, 1), got {beta}"
        )))
    }
}

/// Floored probability of chain 1 in state `x`: 0.5 without a usable
/// design or before the first visit, otherwise the mixture of the design's
/// ratio with the uniform choice at weight `M^−β`.
pub fn sampling_probability(kappa: Option<&KappaVector>, x: usize, visits: f64, beta: f64) -> f64 {
    let Some(k) = kappa else {
        return 0.5;
    };
    let (a, b) = (k.get(Chain::One, x), k.get(Chain::Two, x));
    if !(a + b > 0.0) || visits < 1.0 {
        return 0.5;
    }
    let w = visits.powf(-beta);
    (1.0 - w) * a / (a + b) + 0.5 * w
}

/// Adaptive Markov design.
#[derive(Clone, Debug)]
pub struct OnlineEti {
    config: EtiConfig,
    stats: SufficientStats,
    kappa_hat: Option<KappaVector>,
    solves: u64,
    solver_failures: u64,
}

impl OnlineEti {
    pub fn new(n_states: usize, config: EtiConfig) -> Result<Self, PolicyError> {
        check_beta(config.beta)?;
        Ok(OnlineEti {
            config,
            stats: SufficientStats::new(n_states),
            kappa_hat: None,
            solves: 0,
            solver_failures: 0,
        })
    }

    /// Starts from existing statistics, solving immediately if both estimated
    /// kernels are irreducible.
    pub fn with_stats(stats: SufficientStats, config: EtiConfig) -> Result<Self, PolicyError> {
        check_beta(config.beta)?;
        let mut s = OnlineEti {
            config,
            stats,
            kappa_hat: None,
            solves: 0,
            solver_failures: 0,
        };
        if s.stats.j_reached() {
            s.resolve();
        }
        Ok(s)
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn kappa_hat(&self) -> Option<&KappaVector> {
        self.kappa_hat.as_ref()
    }

    pub fn solver_failures(&self) -> u64 {
        self.solver_failures
    }

    pub fn solves(&self) -> u64 {
        self.solves
    }

    /// Current probability of chain 1 in state `x`.
    pub fn p_hat(&self, x: usize) -> f64 {
        sampling_probability(self.kappa_hat.as_ref(), x, self.stats.visits(x), self.config.beta)
    }

    /// Current plug-in treatment effect (0 before `J`).
    pub fn alpha_hat(&self) -> f64 {
        estimators::mle_alpha_only(&self.stats)
    }

    fn resolve(&mut self) {
        self.solves += 1;
        let Ok(est) = estimators::mle_alpha(&self.stats) else {
            self.solver_failures += 1;
            return;
        };
        if est.pre_j {
            return;
        }
        let pi = est.pi_hat.clone().map(|v| v.iter().copied().collect::<Vec<_>>());
        let sigma2 = est.sigma2_hat.clone().map(|v| v.iter().copied().collect::<Vec<_>>());
        let opts = SolverOptions {
            warm_start: self.kappa_hat.clone(),
            ..SolverOptions::default()
        };
        let solved =
            design::solve_optimal_kappa_with(&pi, &sigma2, &est.p_hat[0], &est.p_hat[1], &opts)
                .or_else(|_| {
                    // A stale warm start can sit off the new constraint set.
                    design::solve_optimal_kappa(&pi, &sigma2, &est.p_hat[0], &est.p_hat[1])
                });
        match solved {
            Ok(sol) => self.kappa_hat = Some(sol.kappa_star),
            Err(_) => self.solver_failures += 1,
        }
    }

    fn observe_record(&mut self, rec: &StepRecord) -> Result<(), PolicyError> {
        let before = self.stats.j_reached();
        self.stats
            .update(rec)
            .map_err(|e| PolicyError::InvalidConfig(e.to_string()))?;
        if !self.stats.j_reached() {
            return Ok(());
        }
        let due = match self.config.resolve {
            ResolveSchedule::EveryStep => true,
            ResolveSchedule::Pow2 => {
                let m = self.stats.visits(rec.prev_state) as u64;
                !before || m.is_power_of_two()
            }
        };
        if due {
            self.resolve();
        }
        Ok(())
    }
}

impl Policy for OnlineEti {
    fn decide(&mut self, x: usize, u: f64) -> Result<PolicyDecision, PolicyError> {
        let p = self.p_hat(x);
        if self.stats.j_reached() && self.kappa_hat.is_some() {
            let m = self.stats.visits(x);
            if m >= 1.0 {
                let floor = 0.5 * m.powf(-self.config.beta);
                debug_assert!(p >= floor - 1e-12 && 1.0 - p >= floor - 1e-12);
            }
        }
        Ok(PolicyDecision::draw(p, u))
    }

    fn observe(&mut self, rec: &StepRecord) {
        self.observe_record(rec)
            .expect("simulator feeds records in order");
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        let n = self.stats.n_states();
        Some(json!({
            "p_hat": (0..n).map(|x| self.p_hat(x)).collect::<Vec<_>>(),
            "kappa_hat": self.kappa_hat,
            "solves": self.solves,
            "solver_failures": self.solver_failures,
        }))
    }

    fn solver_failures(&self) -> u64 {
        self.solver_failures
    }
}

/// Running sums over the completed cycles of one chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleSums {
    pub count: u64,
    pub y: f64,
    pub eta: f64,
    pub y2: f64,
    pub y_eta: f64,
    pub eta2: f64,
}

impl CycleSums {
    fn push(&mut self, y: f64, eta: f64) {
        self.count += 1;
        self.y += y;
        self.eta += eta;
        self.y2 += y * y;
        self.y_eta += y * eta;
        self.eta2 += eta * eta;
    }

    /// Reward per unit time, `ΣY / Ση`.
    pub fn alpha(&self) -> Option<f64> {
        (self.count > 0).then(|| self.y / self.eta)
    }

    /// Mean cycle length.
    pub fn eta_mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.eta / self.count as f64)
    }

    /// `(Σ (Y − α̂ η)² / Ση)^{1/2}` from the expanded running sums.
    pub fn sigma_bar(&self) -> Option<f64> {
        let a = self.alpha()?;
        let ss = self.y2 - 2.0 * a * self.y_eta + a * a * self.eta2;
        Some((ss / self.eta).max(0.0).sqrt())
    }
}

/// Adaptive regenerative design.
#[derive(Clone, Debug)]
pub struct OnlineEti2 {
    config: Eti2Config,
    latch: Option<Chain>,
    cycle_y: f64,
    cycle_len: f64,
    sums: [CycleSums; 2],
    p_hat: f64,
}

impl OnlineEti2 {
    pub fn new(n_states: usize, config: Eti2Config) -> Result<Self, PolicyError> {
        check_beta(config.beta)?;
        if config.xr >= n_states {
            return Err(PolicyError::InvalidConfig("regeneration state out of range".into()));
        }
        Ok(OnlineEti2 {
            config,
            latch: None,
            cycle_y: 0.0,
            cycle_len: 0.0,
            sums: [CycleSums::default(); 2],
            p_hat: 0.5,
        })
    }

    pub fn xr(&self) -> usize {
        self.config.xr
    }

    /// Completed cycles.
    pub fn cycles(&self) -> u64 {
        self.sums[0].count + self.sums[1].count
    }

    pub fn cycle_sums(&self, chain: Chain) -> &CycleSums {
        &self.sums[chain.index()]
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn sigma_bar_hat(&self, chain: Chain) -> Option<f64> {
        self.sums[chain.index()].sigma_bar()
    }

    /// `α̂(2) − α̂(1)` over completed cycles; 0 until both chains have one.
    pub fn alpha_hat(&self) -> f64 {
        match (self.sums[0].alpha(), self.sums[1].alpha()) {
            (Some(a1), Some(a2)) => a2 - a1,
            _ => 0.0,
        }
    }

    fn refresh(&mut self) {
        let [s1, s2] = &self.sums;
        let target = match (s1.sigma_bar(), s2.sigma_bar(), s1.eta_mean(), s2.eta_mean()) {
            (Some(sb1), Some(sb2), Some(e1), Some(e2)) if sb1 > 0.0 && sb2 > 0.0 => {
                Some(e2 * sb1 / (e2 * sb1 + e1 * sb2))
            }
            _ => None,
        };
        self.p_hat = match target {
            Some(p) => {
                let w = (self.cycles() as f64).powf(-self.config.beta);
                (1.0 - w) * p + 0.5 * w
            }
            None => 0.5,
        };
    }
}

impl Policy for OnlineEti2 {
    fn decide(&mut self, x: usize, u: f64) -> Result<PolicyDecision, PolicyError> {
        match self.latch {
            Some(a) if x != self.config.xr => Ok(PolicyDecision::fixed(a)),
            _ => {
                let d = PolicyDecision::draw(self.p_hat, u);
                self.latch = Some(d.action);
                Ok(d)
            }
        }
    }

    fn observe(&mut self, rec: &StepRecord) {
        self.cycle_y += rec.reward;
        self.cycle_len += 1.0;
        if rec.next_state == self.config.xr {
            self.sums[rec.action.index()].push(self.cycle_y, self.cycle_len);
            self.cycle_y = 0.0;
            self.cycle_len = 0.0;
            self.refresh();
        }
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        Some(json!({
            "p_hat": self.p_hat,
            "cycles": self.cycles(),
            "sigma_bar_hat": [self.sigma_bar_hat(Chain::One), self.sigma_bar_hat(Chain::Two)],
        }))
    }

    fn cycles(&self) -> Option<u64> {
        Some(OnlineEti2::cycles(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{analyze, instances};

    fn rec(step: u64, x: usize, a: Chain, r: f64, y: usize) -> StepRecord {
        StepRecord {
            step,
            prev_state: x,
            action: a,
            reward: r,
            next_state: y,
        }
    }

    #[test]
    fn fresh_state_is_uniform() {
        let mut e = OnlineEti::new(3, EtiConfig::default()).unwrap();
        for x in 0..3 {
            assert_eq!(e.p_hat(x), 0.5);
            assert_eq!(e.decide(x, 0.5).unwrap().p_first, 0.5);
        }
        assert_eq!(e.alpha_hat(), 0.0);
    }

    #[test]
    fn floor_formula() {
        let k = KappaVector::new(vec![0.3, 0.0], vec![0.1, 0.0]);
        let p = sampling_probability(Some(&k), 0, 1e4, 0.5);
        assert!((p - (0.99 * 0.75 + 0.005)).abs() < 1e-15);
        assert!((p - 0.75).abs() <= 0.005);
        assert_eq!(sampling_probability(Some(&k), 1, 1e4, 0.5), 0.5);
        assert_eq!(sampling_probability(Some(&k), 0, 0.0, 0.5), 0.5);
        assert_eq!(sampling_probability(None, 0, 100.0, 0.5), 0.5);
    }

    #[test]
    fn invalid_beta_rejected() {
        assert!(OnlineEti::new(2, EtiConfig { beta: 1.0, ..EtiConfig::default() }).is_err());
        assert!(OnlineEti2::new(2, Eti2Config { xr: 0, beta: 0.0 }).is_err());
        assert!(OnlineEti2::new(2, Eti2Config { xr: 2, beta: 0.5 }).is_err());
    }

    #[test]
    fn pre_j_alpha_is_zero() {
        let mut e = OnlineEti::new(2, EtiConfig::default()).unwrap();
        let steps = [
            (0, Chain::One, 1.0, 0),
            (0, Chain::One, 1.0, 1),
            (1, Chain::One, 0.0, 0),
        ];
        for (k, (x, a, r, y)) in steps.into_iter().enumerate() {
            e.observe(&rec(k as u64 + 1, x, a, r, y));
            assert_eq!(e.alpha_hat(), 0.0);
            assert!(e.kappa_hat().is_none());
        }
    }

    #[test]
    fn exact_statistics_recover_optimal_design() {
        let spec = instances::w2();
        let a = analyze(&spec).unwrap();
        let truth = design::optimal_design(&spec, &a).unwrap();
        // Counts proportional to κ = π/2 with exact transition and reward
        // frequencies, scaled so every count is integral in expectation.
        let big = 1e9;
        let n = 2;
        let mut phi = vec![0.0; 2 * n * n];
        let mut psi = vec![0.0; 2 * n * n];
        let mut ups = vec![0.0; 2 * n * n];
        for c in Chain::BOTH {
            let p = spec.transition(c);
            for x in 0..n {
                for y in 0..n {
                    let k = (c.index() * n + x) * n + y;
                    let cnt = big * a.pi[c.index()][x] / 2.0 * p[(x, y)];
                    let d = spec.reward(c, x, y);
                    phi[k] = cnt;
                    psi[k] = cnt * d.mean();
                    ups[k] = cnt * (d.variance() + d.mean() * d.mean());
                }
            }
        }
        let stats = SufficientStats::from_transitions(n, phi, psi, ups).unwrap();
        let e = OnlineEti::with_stats(stats, EtiConfig::default()).unwrap();
        let k = e.kappa_hat().expect("design solved");
        assert!(k.max_abs_diff(&truth.kappa_star) < 1e-8);
    }

    #[test]
    fn eti2_first_regeneration_is_uniform() {
        let mut e = OnlineEti2::new(2, Eti2Config { xr: 0, beta: 0.5 }).unwrap();
        let d = e.decide(0, 0.4).unwrap();
        assert_eq!(d.p_first, 0.5);
        assert_eq!(d.action, Chain::One);
        // Away from the regeneration state the latch holds.
        e.observe(&rec(1, 0, Chain::One, 1.0, 1));
        assert_eq!(e.decide(1, 0.99).unwrap().action, Chain::One);
    }

    #[test]
    fn eti2_deterministic_cycles_keep_uniform() {
        let mut e = OnlineEti2::new(2, Eti2Config { xr: 0, beta: 0.5 }).unwrap();
        let mut step = 0;
        for k in 0..200 {
            let u = if k % 2 == 0 { 0.1 } else { 0.9 };
            let a = e.decide(0, u).unwrap().action;
            step += 1;
            e.observe(&rec(step, 0, a, 1.0, 1));
            e.decide(1, 0.5).unwrap();
            step += 1;
            e.observe(&rec(step, 1, a, 0.0, 0));
            assert_eq!(e.p_hat(), 0.5);
        }
        assert_eq!(e.cycles(), 200);
        assert_eq!(e.sigma_bar_hat(Chain::One), Some(0.0));
        let total: f64 = Chain::BOTH.iter().map(|&c| e.cycle_sums(c).eta).sum();
        assert_eq!(total, step as f64);
    }

    #[test]
    fn cycle_sums_match_direct_formula() {
        let cycles = [(1.0, 2.0), (0.0, 1.0), (3.0, 4.0), (1.0, 1.0)];
        let mut s = CycleSums::default();
        for (y, e) in cycles {
            s.push(y, e);
        }
        let a = 5.0 / 8.0;
        let direct: f64 = cycles.iter().map(|(y, e)| (y - a * e).powi(2)).sum::<f64>() / 8.0;
        assert_eq!(s.alpha(), Some(a));
        assert_eq!(s.eta_mean(), Some(2.0));
        assert!((s.sigma_bar().unwrap() - direct.sqrt()).abs() < 1e-14);
    }
}
