//! Benchmarks and the regulated-market equilibrium.
//!
//! All equilibria here are computed constructively from convex dispatch
//! programs over production adjustments `p`:
//!
//! * social optimum: `min Σ J_i(p_i)`,
//! * central program: `min Σ J_i(p_i) + Σ (D_i − p_i)² / (2 a (I − 1))`,
//!
//! both subject to `Σ p_i = Σ D_i` (multiplier `κ`) and
//! `−F_l ≤ Σ_i π_il (D_i − p_i) ≤ F_l` (multipliers `τ⁻_l`, `τ⁺_l`).
//! The regulated equilibrium's production is the central program's
//! minimizer; its prices and bids follow in closed form.

use nalgebra::{DMatrix, DVector};

use crate::market::{self, Scenario};
use crate::qp::{self, QpError, QuadraticProgram};
use crate::{Error, Result};

/// Primal-dual solution of a dispatch program.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub p: Vec<f64>,
    /// Balance multiplier `κ`.
    pub kappa: f64,
    pub tau_lower: Vec<f64>,
    pub tau_upper: Vec<f64>,
    pub kkt_residual: f64,
}

impl Dispatch {
    /// Nodal price `−κ − Σ_l π_il τ⁻_l + Σ_l π_il τ⁺_l`.
    pub fn nodal_prices(&self, scenario: &Scenario) -> Vec<f64> {
        let net = scenario.network();
        (0..scenario.size())
            .map(|i| {
                let congestion: f64 = (0..net.line_count())
                    .map(|l| net.factor(i, l) * (self.tau_upper[l] - self.tau_lower[l]))
                    .sum();
                -self.kappa + congestion
            })
            .collect()
    }
}

/// Solves the dispatch program; `sharing_weight = Some(w)` adds `Σ (D_i − p_i)² / (2w)`.
fn solve_dispatch(scenario: &Scenario, sharing_weight: Option<f64>) -> Result<Dispatch> {
    let n = scenario.size();
    let net = scenario.network();
    let demands = scenario.demands();
    let extra = sharing_weight.map_or(0.0, |w| 1.0 / w);
    let hessian = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        scenario.prosumers().iter().map(|p| 2.0 * p.c + extra),
    ));
    let linear = DVector::from_iterator(n, scenario.prosumers().iter().map(|p| p.d - p.demand * extra));
    let total: f64 = demands.iter().sum();
    let limited: Vec<usize> = net.limited_lines().collect();
    let mut c = DMatrix::zeros(limited.len(), n);
    let mut lo = DVector::zeros(limited.len());
    let mut up = DVector::zeros(limited.len());
    for (row, &l) in limited.iter().enumerate() {
        let mut demand_flow = 0.0;
        for i in 0..n {
            let pi = net.factor(i, l);
            c[(row, i)] = -pi;
            demand_flow += pi * demands[i];
        }
        lo[row] = -net.limit(l) - demand_flow;
        up[row] = net.limit(l) - demand_flow;
    }
    // Balance written as −Σp = −ΣD so its multiplier is κ directly.
    let program = QuadraticProgram::new(hessian, linear)
        .with_equalities(DMatrix::from_element(1, n, -1.0), DVector::from_element(1, -total))
        .with_inequalities(c, lo, up);
    let sol = qp::solve_qp(&program).map_err(|e| match e {
        QpError::Infeasible => Error::Infeasible,
        other => Error::Qp(other),
    })?;
    let mut tau_lower = vec![0.0; net.line_count()];
    let mut tau_upper = vec![0.0; net.line_count()];
    for (row, &l) in limited.iter().enumerate() {
        tau_lower[l] = sol.ineq_duals_lower[row];
        tau_upper[l] = sol.ineq_duals_upper[row];
    }
    Ok(Dispatch {
        p: sol.x.iter().copied().collect(),
        kappa: sol.eq_duals[0],
        tau_lower,
        tau_upper,
        kkt_residual: sol.kkt_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialOptimum {
    pub dispatch: Dispatch,
    pub costs: Vec<f64>,
    pub total_cost: f64,
}

impl SocialOptimum {
    pub fn p_tilde(&self) -> &[f64] {
        &self.dispatch.p
    }
}

/// Minimizes total disutility under balance and flow limits.
pub fn social_optimum(scenario: &Scenario) -> Result<SocialOptimum> {
    let dispatch = solve_dispatch(scenario, None)?;
    let costs: Vec<f64> = scenario.prosumers().iter().zip(&dispatch.p).map(|(pr, &p)| pr.disutility(p)).collect();
    let total_cost = costs.iter().sum();
    Ok(SocialOptimum { dispatch, costs, total_cost })
}

/// Solves the central program whose minimizer is the regulated equilibrium's production.
pub fn central_solution(scenario: &Scenario) -> Result<Dispatch> {
    if scenario.size() < 2 {
        return Err(Error::TooFewProsumers(scenario.size()));
    }
    solve_dispatch(scenario, Some(scenario.influence()))
}

/// Violation of the central program's optimality system at `dispatch`.
pub fn central_kkt_residual(scenario: &Scenario, dispatch: &Dispatch) -> f64 {
    let net = scenario.network();
    let w = scenario.influence();
    let mut worst: f64 = 0.0;
    let mut withdrawals = Vec::with_capacity(scenario.size());
    for (i, pr) in scenario.prosumers().iter().enumerate() {
        let p = dispatch.p[i];
        let congestion: f64 = (0..net.line_count())
            .map(|l| net.factor(i, l) * (dispatch.tau_lower[l] - dispatch.tau_upper[l]))
            .sum();
        worst = worst.max((pr.marginal(p) - (pr.demand - p) / w + dispatch.kappa + congestion).abs());
        withdrawals.push(pr.demand - p);
    }
    worst = worst.max(withdrawals.iter().sum::<f64>().abs());
    let flows = net.line_flows(&withdrawals).expect("length matches");
    for (l, flow) in flows.iter().enumerate() {
        let (lo, up) = (dispatch.tau_lower[l], dispatch.tau_upper[l]);
        worst = worst.max((-lo).max(0.0)).max((-up).max(0.0));
        let limit = net.limit(l);
        if limit.is_finite() {
            worst = worst.max((-(flow + limit)).max(0.0)).max((flow - limit).max(0.0));
            worst = worst.max((lo * (flow + limit)).abs()).max((up * (limit - flow)).abs());
        }
    }
    worst
}

/// The unique equilibrium of the price-regulated mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub p_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub lambda_r: Vec<f64>,
    /// Traded quantities `D_i − p̄_i`.
    pub q_bar: Vec<f64>,
    pub kappa: f64,
    pub tau_lower: Vec<f64>,
    pub tau_upper: Vec<f64>,
    /// Regulated costs `Γ̃_i(p̄, b̄)`.
    pub costs: Vec<f64>,
    /// `J(p̄)`.
    pub total_disutility: f64,
    pub net_payment: f64,
    pub residuals: EquilibriumResiduals,
}

/// Self-consistency checks carried by every equilibrium report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquilibriumResiduals {
    /// KKT violation of the central program.
    pub central_kkt: f64,
    /// `max |λ(b̄) − λ̄ʳ|` after re-clearing the equilibrium bids.
    pub reclear_price: f64,
    /// `max |q(b̄) − (D − p̄)|` after re-clearing.
    pub reclear_quantity: f64,
    /// `max |λ̄ʳ_i − (−κ − Σ π τ⁻ + Σ π τ⁺)|`.
    pub price_structure: f64,
    /// `|Σ λ̄ʳ q̄ − Σ F (τ⁻ + τ⁺)|`.
    pub net_payment_identity: f64,
}

/// Computes the regulated equilibrium from the central program.
///
/// `λ̄ʳ_i = 2c_i p̄_i + d_i − (D_i − p̄_i)/(a(I−1))` and `b̄_i = D_i − p̄_i + a λ̄ʳ_i`.
pub fn improved_gne(scenario: &Scenario) -> Result<EquilibriumResult> {
    let central = central_solution(scenario)?;
    let a = scenario.a();
    let w = scenario.influence();
    let p_bar = central.p.clone();
    let q_bar: Vec<f64> = scenario.prosumers().iter().zip(&p_bar).map(|(pr, p)| pr.demand - p).collect();
    let lambda_r: Vec<f64> = scenario
        .prosumers()
        .iter()
        .zip(p_bar.iter().zip(&q_bar))
        .map(|(pr, (&p, &q))| pr.marginal(p) - q / w)
        .collect();
    let b_bar: Vec<f64> = q_bar.iter().zip(&lambda_r).map(|(q, l)| q + a * l).collect();

    let outcome = market::clear_market(scenario, &b_bar)?;
    let costs: Vec<f64> = (0..scenario.size())
        .map(|i| market::prosumer_cost_from_outcome(scenario, &outcome, i, true))
        .collect();
    let reclear_price = max_abs_diff(&outcome.lambda, &lambda_r);
    let reclear_quantity = max_abs_diff(&outcome.q, &q_bar);

    let mut eqm = EquilibriumResult {
        total_disutility: scenario.total_disutility(&p_bar),
        p_bar,
        b_bar,
        lambda_r,
        q_bar,
        kappa: central.kappa,
        tau_lower: central.tau_lower.clone(),
        tau_upper: central.tau_upper.clone(),
        costs,
        net_payment: 0.0,
        residuals: EquilibriumResiduals {
            central_kkt: central_kkt_residual(scenario, &central),
            reclear_price,
            reclear_quantity,
            ..Default::default()
        },
    };
    eqm.net_payment = net_payment(scenario, &eqm);
    eqm.residuals.price_structure = price_structure_residual(scenario, &eqm);
    eqm.residuals.net_payment_identity = (eqm.net_payment - congestion_rent(scenario, &eqm)).abs();
    Ok(eqm)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `max_i |λ̄ʳ_i − (−κ − Σ_l π_il τ⁻_l + Σ_l π_il τ⁺_l)|`.
pub fn price_structure_residual(scenario: &Scenario, eqm: &EquilibriumResult) -> f64 {
    let dispatch = Dispatch {
        p: eqm.p_bar.clone(),
        kappa: eqm.kappa,
        tau_lower: eqm.tau_lower.clone(),
        tau_upper: eqm.tau_upper.clone(),
        kkt_residual: 0.0,
    };
    max_abs_diff(&dispatch.nodal_prices(scenario), &eqm.lambda_r)
}

/// Net payment collected by the platform, `Σ_i λ̄ʳ_i q̄_i`.
pub fn net_payment(_scenario: &Scenario, eqm: &EquilibriumResult) -> f64 {
    eqm.lambda_r.iter().zip(&eqm.q_bar).map(|(l, q)| l * q).sum()
}

/// Congestion rent `Σ_l F_l (τ⁻_l + τ⁺_l)`; unlimited lines contribute nothing.
pub fn congestion_rent(scenario: &Scenario, eqm: &EquilibriumResult) -> f64 {
    let net = scenario.network();
    net.limited_lines().map(|l| net.limit(l) * (eqm.tau_lower[l] + eqm.tau_upper[l])).sum()
}

/// Per-prosumer `Γ̃_i(p̄, b̄) ≤ J_i(D_i) + 1e-8`.
pub fn pareto_check(scenario: &Scenario, eqm: &EquilibriumResult) -> Vec<bool> {
    scenario
        .prosumers()
        .iter()
        .zip(&eqm.costs)
        .map(|(pr, cost)| *cost <= pr.disutility(pr.demand) + 1e-8)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfSufficiency {
    pub costs: Vec<f64>,
    pub total: f64,
}

/// Costs `J_i(D_i)` when every prosumer covers its own reduction.
pub fn self_sufficiency(scenario: &Scenario) -> SelfSufficiency {
    let costs: Vec<f64> = scenario.prosumers().iter().map(|p| p.disutility(p.demand)).collect();
    let total = costs.iter().sum();
    SelfSufficiency { costs, total }
}

/// The price-taking (large-market) equilibrium built from the social optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTaking {
    pub p_tilde: Vec<f64>,
    /// Multipliers of `q_i = D_i − p_i`, i.e. the social optimum's nodal prices.
    pub lambda_tilde: Vec<f64>,
    pub b_tilde: Vec<f64>,
}

pub fn price_taking_equilibrium(scenario: &Scenario) -> Result<PriceTaking> {
    let social = social_optimum(scenario)?;
    let lambda_tilde = social.dispatch.nodal_prices(scenario);
    let b_tilde = scenario
        .prosumers()
        .iter()
        .zip(social.p_tilde().iter().zip(&lambda_tilde))
        .map(|(pr, (p, l))| pr.demand - p + scenario.a() * l)
        .collect();
    Ok(PriceTaking { p_tilde: social.dispatch.p, lambda_tilde, b_tilde })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// The variational-equilibrium characterization assumes a radial network.
    NonRadialNetwork,
    /// The market sensitivity is below the bidding convergence threshold.
    SensitivityBelowThreshold { a: f64, a_min: f64 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::NonRadialNetwork => write!(f, "network is not radial; variational equilibrium formulas assume a tree"),
            Warning::SensitivityBelowThreshold { a, a_min } => {
                write!(f, "market sensitivity a = {a} is below the convergence threshold {a_min}")
            }
        }
    }
}

/// Variational equilibrium of the unregulated game.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalEquilibrium {
    pub p_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub lambda: Vec<f64>,
    pub warnings: Vec<Warning>,
}

/// `p̄` from the central program, `λ̄_i = 2c_i p̄_i + d_i + (D_i − p̄_i)/a` and
/// `b̄_i = 2a c_i p̄_i + a d_i + 2 (D_i − p̄_i)`.
pub fn variational_equilibrium(scenario: &Scenario) -> Result<VariationalEquilibrium> {
    let central = central_solution(scenario)?;
    let a = scenario.a();
    let mut lambda = Vec::with_capacity(scenario.size());
    let mut b_bar = Vec::with_capacity(scenario.size());
    for (pr, &p) in scenario.prosumers().iter().zip(&central.p) {
        let q = pr.demand - p;
        lambda.push(pr.marginal(p) + q / a);
        b_bar.push(a * pr.marginal(p) + 2.0 * q);
    }
    let warnings = if scenario.network().is_radial() { vec![] } else { vec![Warning::NonRadialNetwork] };
    Ok(VariationalEquilibrium { p_bar: central.p, b_bar, lambda, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoaReport {
    /// `J(p̄) / J(p̃)`.
    pub poa: f64,
    /// `1 + C₁ / (2 a (I − 1) C₂)`, absent when `C₂ ≤ 0`.
    pub upper_bound: Option<f64>,
    /// `max_i max{(D_i − p̃_i)², (D_i − p̄_i)²}`.
    pub c1: f64,
    /// `min_i J_i(p̃_i)`.
    pub c2: f64,
    pub equilibrium_cost: f64,
    pub social_cost: f64,
}

/// Price of anarchy of the regulated mechanism with instance constants.
pub fn poa(scenario: &Scenario) -> Result<PoaReport> {
    let social = social_optimum(scenario)?;
    let central = central_solution(scenario)?;
    let social_cost = social.total_cost;
    if social_cost <= 0.0 || social_cost.is_nan() {
        return Err(Error::DegenerateBaseline(social_cost));
    }
    let equilibrium_cost = scenario.total_disutility(&central.p);
    let c1 = scenario
        .prosumers()
        .iter()
        .enumerate()
        .map(|(i, pr)| (pr.demand - social.p_tilde()[i]).powi(2).max((pr.demand - central.p[i]).powi(2)))
        .fold(0.0, f64::max);
    let c2 = social.costs.iter().copied().fold(f64::INFINITY, f64::min);
    let upper_bound = (c2 > 0.0).then(|| 1.0 + c1 / (2.0 * scenario.influence() * c2));
    Ok(PoaReport { poa: equilibrium_cost / social_cost, upper_bound, c1, c2, equilibrium_cost, social_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Prosumer;
    use crate::network::{LineSpec, NetworkModel};
    use approx::assert_abs_diff_eq;

    fn two_bus(limit: f64) -> Scenario {
        let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, limit)], 1).unwrap();
        Scenario::new(net, vec![Prosumer::new(0.003, 0.42, 100.0), Prosumer::new(0.006, 0.72, 200.0)], 10.0).unwrap()
    }

    fn three_bus(limit: f64, demands: [f64; 3]) -> Scenario {
        let lines = vec![LineSpec::new(0, 1, 1.0, limit), LineSpec::new(1, 2, 1.0, f64::INFINITY)];
        let net = NetworkModel::with_default_slack(3, lines).unwrap();
        let pros = demands.iter().map(|&d| Prosumer::new(1.0, 0.0, d)).collect();
        Scenario::new(net, pros, 1.0).unwrap()
    }

    /// Minimizer of `Σ J_i + Σ (D−p)²/(2w)` for two prosumers under `|D₁ − p₁| ≤ F`
    /// by scanning `p₁` on a fine grid, refined around the best point.
    fn two_bus_scan(s: &Scenario, w: Option<f64>, limit: f64) -> f64 {
        let (d1, d2) = (s.prosumer(0).demand, s.prosumer(1).demand);
        let f = |p1: f64| {
            let p2 = d1 + d2 - p1;
            let mut v = s.prosumer(0).disutility(p1) + s.prosumer(1).disutility(p2);
            if let Some(w) = w {
                v += ((d1 - p1).powi(2) + (d2 - p2).powi(2)) / (2.0 * w);
            }
            v
        };
        let (mut lo, mut hi) = ((d1 - limit).max(-1e3), (d1 + limit).min(1e3));
        let mut best = lo;
        for _ in 0..6 {
            let step = (hi - lo) / 1000.0;
            best = (0..=1000).map(|k| lo + step * k as f64).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
            lo = (best - 2.0 * step).max(d1 - limit);
            hi = (best + 2.0 * step).min(d1 + limit);
        }
        best
    }

    #[test]
    fn social_optimum_fixtures() {
        let s = two_bus(10.0);
        let so = social_optimum(&s).unwrap();
        assert_abs_diff_eq!(so.p_tilde()[0], 110.0, epsilon = 1e-9);
        assert_abs_diff_eq!(so.costs[0], 82.5, epsilon = 1e-9);
        assert_abs_diff_eq!(so.costs[1], 353.4, epsilon = 1e-9);

        let s = two_bus(200.0);
        let so = social_optimum(&s).unwrap();
        let scanned = two_bus_scan(&s, None, 200.0);
        assert_abs_diff_eq!(so.p_tilde()[0], scanned, epsilon = 1e-6);
        assert_abs_diff_eq!(so.p_tilde()[0], 650.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn identical_prosumers_stay_self_sufficient() {
        let lines = vec![LineSpec::new(0, 1, 1.0, 100.0), LineSpec::new(1, 2, 1.0, 100.0)];
        let net = NetworkModel::with_default_slack(3, lines).unwrap();
        let s = Scenario::new(net, vec![Prosumer::new(0.01, 0.5, 3.0); 3], 2.0).unwrap();
        let so = social_optimum(&s).unwrap();
        for p in so.p_tilde() {
            assert_abs_diff_eq!(*p, 3.0, epsilon = 1e-9);
        }
        let report = poa(&s).unwrap();
        assert_abs_diff_eq!(report.poa, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn central_solution_fixtures() {
        let s = two_bus(10.0);
        let c = central_solution(&s).unwrap();
        assert_abs_diff_eq!(c.p[0], two_bus_scan(&s, Some(10.0), 10.0), epsilon = 1e-6);
        assert_abs_diff_eq!(c.p[0], 23.9 / 0.218, epsilon = 1e-9);

        let s = two_bus(5.0);
        let c = central_solution(&s).unwrap();
        assert_abs_diff_eq!(c.p[0], 105.0, epsilon = 1e-9);
        assert!(c.tau_upper[0] > 0.0 || c.tau_lower[0] > 0.0);
        assert!(central_kkt_residual(&s, &c) <= 1e-9);

        let s = three_bus(0.3, [1.0, 1.0, 0.0]);
        let c = central_solution(&s).unwrap();
        // Uncongested closed form D_i/(4c+1) + 4c ΣD/(12c+3) with c = 1.
        for (p, d) in c.p.iter().zip([1.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*p, d / 5.0 + 8.0 / 15.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn improved_gne_two_bus() {
        let s = two_bus(5.0);
        let e = improved_gne(&s).unwrap();
        assert_abs_diff_eq!(e.b_bar[0], 10.5, epsilon = 1e-9);
        assert_abs_diff_eq!(e.b_bar[1], 30.6, epsilon = 1e-9);
        assert_abs_diff_eq!(e.lambda_r[0], 1.55, epsilon = 1e-9);
        assert_abs_diff_eq!(e.costs[1], 381.35, epsilon = 1e-8);
        assert_abs_diff_eq!(e.net_payment, 5.05, epsilon = 1e-9);
        assert!(e.residuals.reclear_price <= 1e-9);
        assert!(e.residuals.price_structure <= 1e-9);
        assert!(e.residuals.net_payment_identity <= 1e-8);
        assert!(pareto_check(&s, &e).iter().all(|ok| *ok));
    }

    #[test]
    fn improved_gne_three_bus() {
        let s = three_bus(0.3, [1.0, 1.0, 0.0]);
        let e = improved_gne(&s).unwrap();
        for (b, want) in e.b_bar.iter().zip([1.6, 1.6, 0.8]) {
            assert_abs_diff_eq!(*b, want, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(e.net_payment, 0.0, epsilon = 1e-12);
        assert!(e.residuals.price_structure <= 1e-9);
    }

    #[test]
    fn variational_equilibrium_formulas() {
        let s = two_bus(10.0);
        let ve = variational_equilibrium(&s).unwrap();
        let p1 = 23.9 / 0.218;
        let p2 = 300.0 - p1;
        assert_abs_diff_eq!(ve.lambda[0], 0.006 * p1 + 0.42 + (100.0 - p1) / 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(ve.lambda[1], 0.012 * p2 + 0.72 + (200.0 - p2) / 10.0, epsilon = 1e-9);
        assert!(ve.warnings.is_empty());

        let s = three_bus(0.3, [1.0, 1.0, 0.0]);
        let ve = variational_equilibrium(&s).unwrap();
        for i in 0..3 {
            let p = ve.p_bar[i];
            assert_abs_diff_eq!(ve.b_bar[i], 2.0 * p + 2.0 * (s.prosumer(i).demand - p), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_sharing_variational_equilibrium() {
        let lines = vec![LineSpec::new(0, 1, 1.0, 1.0), LineSpec::new(1, 2, 1.0, 1.0), LineSpec::new(0, 2, 1.0, 1.0)];
        let net = NetworkModel::with_default_slack(3, lines).unwrap();
        let s = Scenario::new(net, vec![Prosumer::new(0.5, 0.1, 2.0); 3], 3.0).unwrap();
        let ve = variational_equilibrium(&s).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(ve.p_bar[i], 2.0, epsilon = 1e-9);
            assert_abs_diff_eq!(ve.b_bar[i], 2.0 * 3.0 * 0.5 * 2.0 + 3.0 * 0.1, epsilon = 1e-9);
            assert_abs_diff_eq!(ve.lambda[i], 2.0 * 0.5 * 2.0 + 0.1, epsilon = 1e-9);
        }
        assert_eq!(ve.warnings, vec![Warning::NonRadialNetwork]);
    }

    #[test]
    fn price_taking_prices() {
        let s = two_bus(200.0);
        let pt = price_taking_equilibrium(&s).unwrap();
        for l in &pt.lambda_tilde {
            assert_abs_diff_eq!(*l, 2.0 * 0.003 * 650.0 / 3.0 + 0.42, epsilon = 1e-9);
        }
        let s = two_bus(10.0);
        let pt = price_taking_equilibrium(&s).unwrap();
        assert!((pt.lambda_tilde[0] - pt.lambda_tilde[1]).abs() > 1.0);
        for (i, pr) in s.prosumers().iter().enumerate() {
            assert_abs_diff_eq!(pt.lambda_tilde[i], pr.marginal(pt.p_tilde[i]), epsilon = 1e-9);
        }
    }

    #[test]
    fn self_sufficiency_costs() {
        let s = two_bus(5.0);
        let ss = self_sufficiency(&s);
        assert_eq!(ss.costs, vec![72.0, 384.0]);
        assert_eq!(ss.total, 456.0);
    }

    #[test]
    fn poa_two_bus() {
        let s = two_bus(10.0);
        let r = poa(&s).unwrap();
        let p1 = 23.9 / 0.218;
        let j_bar = s.total_disutility(&[p1, 300.0 - p1]);
        assert_abs_diff_eq!(r.poa, j_bar / 435.9, epsilon = 1e-9);
        assert_abs_diff_eq!(r.c1, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.c2, 82.5, epsilon = 1e-9);
        assert_abs_diff_eq!(r.upper_bound.unwrap(), 1.0 + 100.0 / (2.0 * 10.0 * 82.5), epsilon = 1e-9);
        assert!(r.poa >= 1.0 && r.poa <= r.upper_bound.unwrap());
    }

    #[test]
    fn degenerate_baseline() {
        let net = NetworkModel::with_default_slack(2, vec![LineSpec::new(0, 1, 1.0, 1.0)]).unwrap();
        let s = Scenario::new(net, vec![Prosumer::new(1.0, 0.0, 0.0); 2], 1.0).unwrap();
        assert!(matches!(poa(&s), Err(Error::DegenerateBaseline(_))));
    }
}
