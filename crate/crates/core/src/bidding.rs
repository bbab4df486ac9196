//! Iterative bidding between the platform and prosumers.
//!
//! Each round the platform solves the clearing program with a proximal term
//! `Σ (λ_i − λᵏ_i)²` at the current bids, then every prosumer answers the new
//! price in closed form:
//!
//! ```text
//! p_i = (a(I−1)λ_i − a(I−1)d_i + D_i) / (2a(I−1)c_i + 1),   b_i = D_i − p_i + aλ_i
//! ```
//!
//! Rounds stop once `‖bᵏ⁺¹ − bᵏ‖∞ ≤ ε`.

use std::io::Write;

use serde::Serialize;

use crate::equilibrium::{EquilibriumResult, Warning};
use crate::market::{self, Scenario};
use crate::qp::{self, QpError};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BiddingConfig {
    /// Stop tolerance on `‖Δb‖∞`; `None` uses `1e-6 (1 + ‖D‖∞)`.
    pub epsilon: Option<f64>,
    pub max_iter: usize,
    pub record_trace: bool,
    /// Starting `(b¹, λ¹)`; zeros when absent.
    pub init: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for BiddingConfig {
    fn default() -> Self {
        BiddingConfig { epsilon: None, max_iter: 1000, record_trace: true, init: None }
    }
}

impl BiddingConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn starting_at(mut self, bids: Vec<f64>, prices: Vec<f64>) -> Self {
        self.init = Some((bids, prices));
        self
    }

    fn resolve_epsilon(&self, scenario: &Scenario) -> Result<f64> {
        let eps = self.epsilon.unwrap_or_else(|| {
            let scale = scenario.demands().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            1e-6 * (1.0 + scale)
        });
        if eps <= 0.0 || !eps.is_finite() {
            return Err(Error::InvalidScenario(format!("bidding tolerance must be positive, got {eps}")));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidScenario("max_iter must be at least 1".into()));
        }
        Ok(eps)
    }
}

/// One recorded round `k`: the price `λᵏ` and the prosumers' answer `(pᵏ, bᵏ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub iter: usize,
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    pub delta_b_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiddingRun {
    pub termination: Termination,
    /// Number of completed rounds.
    pub iterations: usize,
    pub lambda: Vec<f64>,
    pub b: Vec<f64>,
    pub p: Vec<f64>,
    /// `‖Δb‖∞` of the last round.
    pub last_delta: f64,
    pub epsilon: f64,
    /// Empty unless `record_trace` was set.
    pub trace: Vec<Iterate>,
    pub warnings: Vec<Warning>,
}

impl BiddingRun {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// `(I − 2) / (2(I − 1)) · max_i 1/c_i`, the sensitivity above which bidding provably converges.
pub fn a_min(scenario: &Scenario) -> f64 {
    let n = scenario.size() as f64;
    let inv_c = scenario.prosumers().iter().map(|p| 1.0 / p.c).fold(0.0, f64::max);
    (n - 2.0) / (2.0 * (n - 1.0)) * inv_c
}

/// Platform step: the proximal clearing price at bids `bᵏ`.
pub fn platform_update(scenario: &Scenario, lambda_k: &[f64], bids_k: &[f64]) -> Result<Vec<f64>> {
    for v in [lambda_k, bids_k] {
        if v.len() != scenario.size() {
            return Err(Error::DimensionMismatch { expected: scenario.size(), found: v.len() });
        }
    }
    let (program, _) = market::clearing_program(scenario, bids_k, Some(lambda_k));
    let sol = qp::solve_qp(&program).map_err(|e| match e {
        QpError::Infeasible => Error::MarketInfeasible,
        other => Error::Qp(other),
    })?;
    Ok(sol.x.iter().copied().collect())
}

/// Prosumer step: closed-form production and bid for each price.
pub fn prosumer_update(scenario: &Scenario, lambda: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scenario.size() < 2 {
        return Err(Error::TooFewProsumers(scenario.size()));
    }
    if lambda.len() != scenario.size() {
        return Err(Error::DimensionMismatch { expected: scenario.size(), found: lambda.len() });
    }
    let a = scenario.a();
    let w = scenario.influence();
    let (p, b) = scenario
        .prosumers()
        .iter()
        .zip(lambda)
        .map(|(pr, &l)| {
            let p = (w * l - w * pr.d + pr.demand) / (2.0 * w * pr.c + 1.0);
            (p, pr.demand - p + a * l)
        })
        .unzip();
    Ok((p, b))
}

/// Runs the bidding protocol until `‖Δb‖∞ ≤ ε` or `max_iter` rounds.
///
/// Hitting the round cap is not an error: the run comes back with
/// [`Termination::MaxIterExceeded`] and its trace. An infeasible clearing
/// mid-run aborts with [`Error::MarketInfeasible`].
pub fn run_bidding(scenario: &Scenario, config: &BiddingConfig) -> Result<BiddingRun> {
    let n = scenario.size();
    if n < 2 {
        return Err(Error::TooFewProsumers(n));
    }
    let epsilon = config.resolve_epsilon(scenario)?;
    let (mut b, mut lambda) = match &config.init {
        Some((b0, l0)) => {
            for v in [b0, l0] {
                if v.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: v.len() });
                }
            }
            (b0.clone(), l0.clone())
        }
        None => (vec![0.0; n], vec![0.0; n]),
    };
    let threshold = a_min(scenario);
    let warnings = if scenario.a() < threshold {
        vec![Warning::SensitivityBelowThreshold { a: scenario.a(), a_min: threshold }]
    } else {
        vec![]
    };

    let mut trace = Vec::new();
    let mut p = vec![0.0; n];
    let mut last_delta = f64::INFINITY;
    let mut termination = Termination::MaxIterExceeded;
    let mut iterations = 0;
    for k in 1..=config.max_iter {
        lambda = platform_update(scenario, &lambda, &b)?;
        let (p_next, b_next) = prosumer_update(scenario, &lambda)?;
        last_delta = b_next.iter().zip(&b).fold(0.0, |m, (x, y)| m.max((x - y).abs()));
        p = p_next;
        b = b_next;
        iterations = k;
        if config.record_trace {
            trace.push(Iterate { iter: k, lambda: lambda.clone(), b: b.clone(), p: p.clone(), delta_b_norm: last_delta });
        }
        if last_delta <= epsilon {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(BiddingRun { termination, iterations, lambda, b, p, last_delta, epsilon, trace, warnings })
}

/// Euclidean distance `‖(p − p̄, b − b̄)‖`.
pub fn distance_to(iterate: &Iterate, eqm: &EquilibriumResult) -> f64 {
    let sq: f64 = iterate.p.iter().zip(&eqm.p_bar).chain(iterate.b.iter().zip(&eqm.b_bar)).map(|(x, y)| (x - y).powi(2)).sum();
    sq.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FejerReport {
    pub monotone: bool,
    /// Squared distances to the equilibrium along the trace.
    pub squared_distances: Vec<f64>,
    /// Round at which the largest increase happened, if any.
    pub worst_round: Option<usize>,
    pub worst_increase: f64,
}

/// Checks that the squared distance to `eqm` never increases along the trace.
///
/// Increases up to `1e-10` relative, plus rounding at the scale of the
/// equilibrium, are tolerated.
pub fn fejer_check(trace: &[Iterate], eqm: &EquilibriumResult) -> FejerReport {
    let squared: Vec<f64> = trace.iter().map(|it| distance_to(it, eqm).powi(2)).collect();
    let scale = eqm.p_bar.iter().chain(&eqm.b_bar).fold(1.0_f64, |m, v| m.max(v.abs()));
    let floor = (1e-12 * scale).powi(2) * (2 * eqm.p_bar.len()) as f64;
    let mut worst_increase = 0.0;
    let mut worst_round = None;
    let mut monotone = true;
    for (k, pair) in squared.windows(2).enumerate() {
        let increase = pair[1] - pair[0];
        if increase > 1e-10 * pair[0] + floor {
            monotone = false;
        }
        if increase > worst_increase {
            worst_increase = increase;
            worst_round = Some(trace[k + 1].iter);
        }
    }
    FejerReport { monotone, squared_distances: squared, worst_round, worst_increase }
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    i: usize,
    lambda: f64,
    b: f64,
    p: f64,
    delta_b_norm: f64,
    dist_to_eqm: Option<f64>,
}

/// Writes the trace as CSV with columns `iter,i,lambda,b,p,delta_b_norm,dist_to_eqm`.
///
/// Prosumer indices are 1-based; `dist_to_eqm` is empty when no equilibrium is given.
pub fn write_trace_csv<W: Write>(trace: &[Iterate], eqm: Option<&EquilibriumResult>, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for it in trace {
        let dist = eqm.map(|e| distance_to(it, e));
        for i in 0..it.b.len() {
            writer.serialize(TraceRow {
                iter: it.iter,
                i: i + 1,
                lambda: it.lambda[i],
                b: it.b[i],
                p: it.p[i],
                delta_b_norm: it.delta_b_norm,
                dist_to_eqm: dist,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::improved_gne;
    use crate::market::Prosumer;
    use crate::network::{LineSpec, NetworkModel};
    use approx::assert_abs_diff_eq;

    fn two_bus(limit: f64) -> Scenario {
        let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, limit)], 1).unwrap();
        Scenario::new(net, vec![Prosumer::new(0.003, 0.42, 100.0), Prosumer::new(0.006, 0.72, 200.0)], 10.0).unwrap()
    }

    fn appendix_three_bus() -> Scenario {
        let lines = vec![LineSpec::new(0, 1, 1.0, 0.3), LineSpec::new(1, 2, 1.0, f64::INFINITY)];
        let net = NetworkModel::with_default_slack(3, lines).unwrap();
        let pros = [1.0, 1.0, 0.0].iter().map(|&d| Prosumer::new(1.0, 0.0, d)).collect();
        Scenario::new(net, pros, 1.0).unwrap()
    }

    #[test]
    fn threshold_values() {
        assert_eq!(a_min(&two_bus(5.0)), 0.0);
        assert_abs_diff_eq!(a_min(&appendix_three_bus()), 0.25, epsilon = 1e-15);
        let net = NetworkModel::with_default_slack(10, (0..9).map(|i| LineSpec::new(i, i + 1, 1.0, 1.0)).collect()).unwrap();
        let s = Scenario::new(net, vec![Prosumer::new(0.003, 0.5, 1.0); 10], 1.0).unwrap();
        assert_abs_diff_eq!(a_min(&s), 8.0 / 18.0 / 0.003, epsilon = 1e-9);
    }

    #[test]
    fn prosumer_step_examples() {
        let s = two_bus(5.0);
        let (p, b) = prosumer_update(&s, &[1.55, 2.56]).unwrap();
        assert_abs_diff_eq!(p[0], 105.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b[0], 10.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 195.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b[1], 30.6, epsilon = 1e-9);

        let net = NetworkModel::with_default_slack(2, vec![LineSpec::new(0, 1, 1.0, 1.0)]).unwrap();
        let s = Scenario::new(net, vec![Prosumer::new(0.5, 0.7, 0.0); 2], 2.0).unwrap();
        let (p, b) = prosumer_update(&s, &[0.7, 0.7]).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0], 1.4, epsilon = 1e-15);
    }

    #[test]
    fn platform_step_examples() {
        let s = two_bus(5.0);
        assert_eq!(platform_update(&s, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let next = platform_update(&s, &[1.55, 2.56], &[10.5, 30.6]).unwrap();
        assert_abs_diff_eq!(next[0], 1.55, epsilon = 1e-10);
        assert_abs_diff_eq!(next[1], 2.56, epsilon = 1e-10);
    }

    #[test]
    fn converges_on_paper_case() {
        let s = two_bus(5.0);
        let eqm = improved_gne(&s).unwrap();
        let run = run_bidding(&s, &BiddingConfig::default().with_epsilon(1e-4)).unwrap();
        assert!(run.converged());
        assert!(run.iterations <= 50);
        for i in 0..2 {
            assert_abs_diff_eq!(run.b[i], eqm.b_bar[i], epsilon = 1e-3);
            assert_abs_diff_eq!(run.p[i], eqm.p_bar[i], epsilon = 1e-3);
        }
        assert!(fejer_check(&run.trace, &eqm).monotone);
    }

    #[test]
    fn converges_on_three_bus() {
        let s = appendix_three_bus();
        let run = run_bidding(&s, &BiddingConfig::default().with_epsilon(1e-9)).unwrap();
        assert!(run.converged());
        assert!(run.warnings.is_empty());
        for (b, want) in run.b.iter().zip([1.6, 1.6, 0.8]) {
            assert_abs_diff_eq!(*b, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn equilibrium_start_is_a_fixed_point() {
        let s = two_bus(10.0);
        let eqm = improved_gne(&s).unwrap();
        let config = BiddingConfig::default().starting_at(eqm.b_bar.clone(), eqm.lambda_r.clone());
        let run = run_bidding(&s, &config).unwrap();
        assert_eq!(run.iterations, 1);
        for i in 0..2 {
            assert_abs_diff_eq!(run.b[i], eqm.b_bar[i], epsilon = 1e-10);
            assert_abs_diff_eq!(run.lambda[i], eqm.lambda_r[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn cap_reports_trace() {
        let s = two_bus(5.0);
        let run = run_bidding(&s, &BiddingConfig::default().with_epsilon(1e-14).with_max_iter(3)).unwrap();
        assert_eq!(run.termination, Termination::MaxIterExceeded);
        assert_eq!(run.trace.len(), 3);
    }

    #[test]
    fn fejer_trivial_and_violation() {
        let s = two_bus(5.0);
        let eqm = improved_gne(&s).unwrap();
        let it = |shift: f64| Iterate {
            iter: 1,
            lambda: vec![0.0; 2],
            b: eqm.b_bar.iter().map(|v| v + shift).collect(),
            p: eqm.p_bar.clone(),
            delta_b_norm: 0.0,
        };
        assert!(fejer_check(&[it(1.0)], &eqm).monotone);
        let report = fejer_check(&[it(1.0), it(2.0)], &eqm);
        assert!(!report.monotone);
        assert_eq!(report.worst_round, Some(1));
    }

    #[test]
    fn trace_csv_columns() {
        let s = two_bus(5.0);
        let eqm = improved_gne(&s).unwrap();
        let run = run_bidding(&s, &BiddingConfig::default().with_max_iter(2).with_epsilon(1e-12)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&run.trace, Some(&eqm), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,i,lambda,b,p,delta_b_norm,dist_to_eqm"));
        assert_eq!(lines.count(), 4);
    }
}
