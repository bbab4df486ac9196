//! Scenarios, the market-clearing rule, price regulation and payments.
//!
//! Given bids `b`, the platform picks prices `λ` minimizing `Σ λ_i²` subject to
//! energy balance `Σ (−a λ_i + b_i) = 0` and line limits
//! `−F_l ≤ Σ_i π_il (−a λ_i + b_i) ≤ F_l`. Quantities follow the demand function
//! `q_i = −a λ_i + b_i`; `q_i > 0` is a purchase.

use nalgebra::{DMatrix, DVector};

use crate::network::NetworkModel;
use crate::qp::{self, QpError, QuadraticProgram};
use crate::{Error, Result};

/// Optional self-energy-balance baseline `p0 + E0 = D0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub p0: f64,
    pub e0: f64,
    pub d0: f64,
}

/// A prosumer with disutility `J(p) = c p² + d p` and required reduction `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prosumer {
    pub c: f64,
    pub d: f64,
    pub demand: f64,
    pub baseline: Option<Baseline>,
}

impl Prosumer {
    pub fn new(c: f64, d: f64, demand: f64) -> Self {
        Prosumer { c, d, demand, baseline: None }
    }

    /// Production-adjustment disutility `J(p)`.
    pub fn disutility(&self, p: f64) -> f64 {
        self.c * p * p + self.d * p
    }

    /// Marginal disutility `2 c p + d`.
    pub fn marginal(&self, p: f64) -> f64 {
        2.0 * self.c * p + self.d
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.c <= 0.0 || !self.c.is_finite() {
            return Err(Error::InvalidScenario(format!("prosumer {}: c must be positive, got {}", index + 1, self.c)));
        }
        if !self.d.is_finite() || !self.demand.is_finite() {
            return Err(Error::InvalidScenario(format!("prosumer {}: d and D must be finite", index + 1)));
        }
        if let Some(base) = self.baseline {
            let gap = base.p0 + base.e0 - base.d0;
            if gap.abs() > 1e-9 * (1.0 + base.d0.abs()) {
                return Err(Error::InvalidScenario(format!(
                    "prosumer {}: baseline violates p0 + E0 = D0 (gap {gap:e})",
                    index + 1
                )));
            }
        }
        Ok(())
    }
}

/// A network, one prosumer per bus and the market sensitivity `a`.
#[derive(Debug, Clone)]
pub struct Scenario {
    network: NetworkModel,
    prosumers: Vec<Prosumer>,
    sensitivity: f64,
}

impl Scenario {
    pub fn new(network: NetworkModel, prosumers: Vec<Prosumer>, sensitivity: f64) -> Result<Self> {
        if prosumers.len() != network.bus_count() {
            return Err(Error::InvalidScenario(format!(
                "{} prosumers for {} buses (one prosumer per bus required)",
                prosumers.len(),
                network.bus_count()
            )));
        }
        if prosumers.len() < 2 {
            return Err(Error::TooFewProsumers(prosumers.len()));
        }
        if sensitivity <= 0.0 || !sensitivity.is_finite() {
            return Err(Error::InvalidScenario(format!("market sensitivity must be positive, got {sensitivity}")));
        }
        for (i, p) in prosumers.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(Scenario { network, prosumers, sensitivity })
    }

    pub fn network(&self) -> &NetworkModel {
        &self.network
    }

    pub fn prosumers(&self) -> &[Prosumer] {
        &self.prosumers
    }

    pub fn prosumer(&self, i: usize) -> &Prosumer {
        &self.prosumers[i]
    }

    /// Market sensitivity `a`.
    pub fn a(&self) -> f64 {
        self.sensitivity
    }

    /// Number of prosumers `I`.
    pub fn size(&self) -> usize {
        self.prosumers.len()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.prosumers.iter().map(|p| p.demand).collect()
    }

    /// `a (I − 1)`, the weight of a prosumer's own price influence.
    pub fn influence(&self) -> f64 {
        self.sensitivity * (self.size() as f64 - 1.0)
    }

    /// Total disutility `J(p) = Σ J_i(p_i)`.
    pub fn total_disutility(&self, p: &[f64]) -> f64 {
        self.prosumers.iter().zip(p).map(|(pr, &pi)| pr.disutility(pi)).sum()
    }

    /// The same scenario with another network (same bus count).
    pub fn with_network(&self, network: NetworkModel) -> Result<Self> {
        Scenario::new(network, self.prosumers.clone(), self.sensitivity)
    }

    pub fn with_sensitivity(&self, a: f64) -> Result<Self> {
        Scenario::new(self.network.clone(), self.prosumers.clone(), a)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), found: v.len() });
        }
        Ok(())
    }
}

/// Result of clearing the market for one bid vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearingOutcome {
    pub lambda: Vec<f64>,
    pub q: Vec<f64>,
    /// Multiplier of the balance constraint.
    pub eta: f64,
    /// Multipliers of `−F_l ≤ flow_l`, zero for unlimited lines.
    pub alpha_lower: Vec<f64>,
    /// Multipliers of `flow_l ≤ F_l`, zero for unlimited lines.
    pub alpha_upper: Vec<f64>,
    pub flows: Vec<f64>,
}

impl ClearingOutcome {
    /// True when some flow multiplier is positive.
    pub fn congested(&self) -> bool {
        self.alpha_lower.iter().chain(&self.alpha_upper).any(|v| *v > 0.0)
    }
}

/// Builds the clearing program in the price variables.
///
/// With `prox = Some(λᵏ)` the objective gains `Σ (λ_i − λᵏ_i)²`, which is the
/// platform step of the bidding protocol.
pub(crate) fn clearing_program(scenario: &Scenario, bids: &[f64], prox: Option<&[f64]>) -> (QuadraticProgram, Vec<usize>) {
    let n = scenario.size();
    let a = scenario.a();
    let net = scenario.network();
    let (hessian, linear) = match prox {
        None => (DMatrix::identity(n, n) * 2.0, DVector::zeros(n)),
        Some(prev) => (DMatrix::identity(n, n) * 4.0, DVector::from_iterator(n, prev.iter().map(|v| -2.0 * v))),
    };
    let eq_matrix = DMatrix::from_element(1, n, -a);
    let eq_rhs = DVector::from_element(1, -bids.iter().sum::<f64>());
    let limited: Vec<usize> = net.limited_lines().collect();
    let mut c = DMatrix::zeros(limited.len(), n);
    let mut lo = DVector::zeros(limited.len());
    let mut up = DVector::zeros(limited.len());
    for (row, &l) in limited.iter().enumerate() {
        let mut bid_flow = 0.0;
        for i in 0..n {
            let pi = net.factor(i, l);
            c[(row, i)] = -a * pi;
            bid_flow += pi * bids[i];
        }
        lo[row] = -net.limit(l) - bid_flow;
        up[row] = net.limit(l) - bid_flow;
    }
    let program = QuadraticProgram::new(hessian, linear)
        .with_equalities(eq_matrix, eq_rhs)
        .with_inequalities(c, lo, up);
    (program, limited)
}

pub(crate) fn outcome_from_solution(scenario: &Scenario, bids: &[f64], sol: &qp::QpSolution, limited: &[usize]) -> Result<ClearingOutcome> {
    let a = scenario.a();
    let lambda: Vec<f64> = sol.x.iter().copied().collect();
    let q: Vec<f64> = lambda.iter().zip(bids).map(|(l, b)| -a * l + b).collect();
    let flows = scenario.network().line_flows(&q)?;
    let lines = scenario.network().line_count();
    let mut alpha_lower = vec![0.0; lines];
    let mut alpha_upper = vec![0.0; lines];
    for (row, &l) in limited.iter().enumerate() {
        alpha_lower[l] = sol.ineq_duals_lower[row];
        alpha_upper[l] = sol.ineq_duals_upper[row];
    }
    Ok(ClearingOutcome { lambda, q, eta: sol.eq_duals[0], alpha_lower, alpha_upper, flows })
}

fn map_infeasible(err: QpError) -> Error {
    match err {
        QpError::Infeasible => Error::MarketInfeasible,
        other => Error::Qp(other),
    }
}

/// Clears the market for bids `b`.
pub fn clear_market(scenario: &Scenario, bids: &[f64]) -> Result<ClearingOutcome> {
    scenario.check_len(bids)?;
    let (program, limited) = clearing_program(scenario, bids, None);
    let sol = qp::solve_qp(&program).map_err(map_infeasible)?;
    outcome_from_solution(scenario, bids, &sol, &limited)
}

/// Clearing quantities from the equivalent projection problem
/// `min Σ (q_i − b_i)²` over balanced, flow-feasible `q`.
pub fn clear_market_q_form(scenario: &Scenario, bids: &[f64]) -> Result<Vec<f64>> {
    scenario.check_len(bids)?;
    let n = scenario.size();
    let net = scenario.network();
    let limited: Vec<usize> = net.limited_lines().collect();
    let mut c = DMatrix::zeros(limited.len(), n);
    let mut bounds = DVector::zeros(limited.len());
    for (row, &l) in limited.iter().enumerate() {
        for i in 0..n {
            c[(row, i)] = net.factor(i, l);
        }
        bounds[row] = net.limit(l);
    }
    let program = QuadraticProgram::new(DMatrix::identity(n, n) * 2.0, DVector::from_iterator(n, bids.iter().map(|b| -2.0 * b)))
        .with_equalities(DMatrix::from_element(1, n, 1.0), DVector::zeros(1))
        .with_inequalities(c, -bounds.clone(), bounds);
    let sol = qp::solve_qp(&program).map_err(map_infeasible)?;
    Ok(sol.x.iter().copied().collect())
}

/// Maximum violation of the clearing optimality system
/// `2λ_i + aη + a Σ_l π_il (α⁻_l − α⁺_l) = 0`, balance, flow feasibility,
/// multiplier signs and complementarity.
pub fn clearing_kkt_residual(scenario: &Scenario, bids: &[f64], outcome: &ClearingOutcome) -> Result<f64> {
    scenario.check_len(bids)?;
    let a = scenario.a();
    let net = scenario.network();
    let mut worst: f64 = 0.0;
    for i in 0..scenario.size() {
        let congestion: f64 = (0..net.line_count())
            .map(|l| net.factor(i, l) * (outcome.alpha_lower[l] - outcome.alpha_upper[l]))
            .sum();
        worst = worst.max((2.0 * outcome.lambda[i] + a * outcome.eta + a * congestion).abs());
    }
    let balance: f64 = outcome.lambda.iter().zip(bids).map(|(l, b)| a * l - b).sum();
    worst = worst.max(balance.abs());
    let q: Vec<f64> = outcome.lambda.iter().zip(bids).map(|(l, b)| -a * l + b).collect();
    let flows = net.line_flows(&q)?;
    for (l, flow) in flows.iter().enumerate() {
        let (lo_mult, up_mult) = (outcome.alpha_lower[l], outcome.alpha_upper[l]);
        worst = worst.max((-lo_mult).max(0.0)).max((-up_mult).max(0.0));
        let limit = net.limit(l);
        if limit.is_finite() {
            let (lo_slack, up_slack) = (flow + limit, limit - flow);
            worst = worst.max((-lo_slack).max(0.0)).max((-up_slack).max(0.0));
            worst = worst.max((lo_mult * lo_slack).abs()).max((up_mult * up_slack).abs());
        } else {
            worst = worst.max(lo_mult.abs()).max(up_mult.abs());
        }
    }
    Ok(worst)
}

/// The marginal-cost term `2 c_i p_i + d_i − q_i / (a (I − 1))` of the regulation rule.
pub fn regulation_term(scenario: &Scenario, i: usize, p_i: f64, q_i: f64) -> f64 {
    scenario.prosumer(i).marginal(p_i) - q_i / scenario.influence()
}

/// Regulated prices: a floor on buyers' and a cap on sellers' prices.
///
/// At `q_i = 0` the buyer branch (max) applies.
pub fn regulated_price(scenario: &Scenario, clearing: &ClearingOutcome, p: &[f64]) -> Result<Vec<f64>> {
    scenario.check_len(p)?;
    Ok((0..scenario.size())
        .map(|i| {
            let term = regulation_term(scenario, i, p[i], clearing.q[i]);
            if clearing.q[i] >= 0.0 {
                clearing.lambda[i].max(term)
            } else {
                clearing.lambda[i].min(term)
            }
        })
        .collect())
}

/// Regulated payment `u_i = max{λ_i q_i, (2c_i p_i + d_i − q_i/(a(I−1))) q_i}`
/// evaluated on a known clearing outcome.
pub fn payment_from_outcome(scenario: &Scenario, outcome: &ClearingOutcome, p_i: f64, i: usize) -> f64 {
    let q = outcome.q[i];
    let term = regulation_term(scenario, i, p_i, q);
    (outcome.lambda[i] * q).max(term * q)
}

/// Regulated payment of prosumer `i` for bids `b` and production `p_i`.
pub fn payment(scenario: &Scenario, bids: &[f64], p_i: f64, i: usize) -> Result<f64> {
    let outcome = clear_market(scenario, bids)?;
    Ok(payment_from_outcome(scenario, &outcome, p_i, i))
}

/// Cost of prosumer `i` on a known outcome, with `p_i = D_i − q_i`.
pub fn prosumer_cost_from_outcome(scenario: &Scenario, outcome: &ClearingOutcome, i: usize, regulated: bool) -> f64 {
    let pr = scenario.prosumer(i);
    let p_i = pr.demand - outcome.q[i];
    let pay = if regulated {
        payment_from_outcome(scenario, outcome, p_i, i)
    } else {
        outcome.lambda[i] * outcome.q[i]
    };
    pr.disutility(p_i) + pay
}

/// Disutility plus payment of prosumer `i` after clearing bids `b`.
///
/// `regulated = false` gives the original game's cost `J_i(p_i) + λ_i q_i`;
/// `regulated = true` replaces the payment by the regulated `u_i`.
pub fn prosumer_cost(scenario: &Scenario, bids: &[f64], i: usize, regulated: bool) -> Result<f64> {
    let outcome = clear_market(scenario, bids)?;
    Ok(prosumer_cost_from_outcome(scenario, &outcome, i, regulated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LineSpec;
    use approx::assert_abs_diff_eq;

    fn two_bus(limit: f64) -> Scenario {
        let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, limit)], 1).unwrap();
        Scenario::new(net, vec![Prosumer::new(0.003, 0.42, 100.0), Prosumer::new(0.006, 0.72, 200.0)], 10.0).unwrap()
    }

    fn three_bus(limit: f64) -> Scenario {
        let lines = vec![LineSpec::new(0, 1, 1.0, limit), LineSpec::new(1, 2, 1.0, f64::INFINITY)];
        let net = NetworkModel::with_default_slack(3, lines).unwrap();
        let pros = vec![Prosumer::new(1.0, 0.0, 1.0), Prosumer::new(1.0, 0.0, 1.0), Prosumer::new(1.0, 0.0, 0.0)];
        Scenario::new(net, pros, 1.0).unwrap()
    }

    #[test]
    fn uncongested_three_bus_price() {
        let s = three_bus(1e3);
        let out = clear_market(&s, &[1.6, 1.6, 0.8]).unwrap();
        for l in &out.lambda {
            assert_abs_diff_eq!(*l, 4.0 / 3.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(out.q[0], 0.8 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.q[2], -1.6 / 3.0, epsilon = 1e-12);
        assert!(!out.congested());
    }

    #[test]
    fn zero_bids_zero_prices() {
        let out = clear_market(&two_bus(5.0), &[0.0, 0.0]).unwrap();
        assert!(out.lambda.iter().chain(&out.q).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn congested_two_bus() {
        let s = two_bus(5.0);
        let b = [10.5, 30.6];
        let out = clear_market(&s, &b).unwrap();
        assert_abs_diff_eq!(out.lambda[0], 1.55, epsilon = 1e-12);
        assert_abs_diff_eq!(out.lambda[1], 2.56, epsilon = 1e-12);
        assert_abs_diff_eq!(out.q[0], -5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(out.q[1], 5.0, epsilon = 1e-10);
        assert!(out.alpha_upper[0] > 0.0);
        assert!(clearing_kkt_residual(&s, &b, &out).unwrap() <= 1e-10);
        let qf = clear_market_q_form(&s, &b).unwrap();
        assert_abs_diff_eq!(qf[0], out.q[0], epsilon = 1e-10);
    }

    #[test]
    fn regulated_price_branches() {
        let s = two_bus(5.0);
        // q_i = 0 uses the buyer branch.
        let out = ClearingOutcome {
            lambda: vec![1.0, 1.0],
            q: vec![0.0, 0.0],
            eta: 0.0,
            alpha_lower: vec![0.0],
            alpha_upper: vec![0.0],
            flows: vec![0.0],
        };
        let p = [100.0, 200.0];
        let r = regulated_price(&s, &out, &p).unwrap();
        assert_abs_diff_eq!(r[0], 1.0_f64.max(s.prosumer(0).marginal(100.0)), epsilon = 1e-14);

        // A buyer priced below its marginal term is lifted to it.
        let q = 4.0;
        let term = regulation_term(&s, 1, 150.0, q);
        let out = ClearingOutcome { lambda: vec![0.0, term - 1.0], q: vec![-q, q], ..out };
        let r = regulated_price(&s, &out, &[100.0, 150.0]).unwrap();
        assert_abs_diff_eq!(r[1], term, epsilon = 1e-14);
    }

    #[test]
    fn payments_and_costs_at_congested_equilibrium() {
        let s = two_bus(5.0);
        let b = [10.5, 30.6];
        assert_abs_diff_eq!(payment(&s, &b, 195.0, 1).unwrap(), 12.8, epsilon = 1e-9);
        assert_abs_diff_eq!(payment(&s, &b, 105.0, 0).unwrap(), -7.75, epsilon = 1e-9);
        assert_abs_diff_eq!(prosumer_cost(&s, &b, 1, true).unwrap(), 381.35, epsilon = 1e-8);
        assert_abs_diff_eq!(prosumer_cost(&s, &b, 0, true).unwrap(), 69.425, epsilon = 1e-8);
    }

    #[test]
    fn self_sufficient_bids_cost_own_production() {
        let s = two_bus(5.0);
        // Equal bids clear at q = 0 without congestion.
        let b = [3.0, 3.0];
        for i in 0..2 {
            let d = s.prosumer(i).demand;
            assert_abs_diff_eq!(prosumer_cost(&s, &b, i, false).unwrap(), s.prosumer(i).disutility(d), epsilon = 1e-9);
            assert_abs_diff_eq!(payment(&s, &b, d, i).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scenario_validation() {
        let net = NetworkModel::with_default_slack(2, vec![LineSpec::new(0, 1, 1.0, 1.0)]).unwrap();
        assert!(Scenario::new(net.clone(), vec![Prosumer::new(1.0, 0.0, 0.0)], 1.0).is_err());
        assert!(Scenario::new(net.clone(), vec![Prosumer::new(1.0, 0.0, 0.0); 2], 0.0).is_err());
        assert!(Scenario::new(net.clone(), vec![Prosumer::new(-1.0, 0.0, 0.0); 2], 1.0).is_err());
        let mut p = Prosumer::new(1.0, 0.0, 1.0);
        p.baseline = Some(Baseline { p0: 1.0, e0: 1.0, d0: 3.0 });
        assert!(Scenario::new(net, vec![p, Prosumer::new(1.0, 0.0, 0.0)], 1.0).is_err());
    }
}
