//! Numerical best responses for the unregulated bidding game.
//!
//! In the unregulated game prosumer `i` pays `λ_i q_i` and its cost as a
//! function of its own bid is continuous and piecewise quadratic, but not
//! necessarily convex. Best responses are therefore found by dense scanning
//! with local refinement, and every local minimum is reported so that
//! disqualified equilibrium candidates are visible.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::market::{self, Prosumer, Scenario};
use crate::network::{LineSpec, NetworkModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    /// Scanned bid interval; auto-sized when absent.
    pub interval: Option<(f64, f64)>,
    /// Coarse grid size.
    pub points: usize,
    pub refine_rounds: usize,
    /// Use regulated payments instead of `λ_i q_i`.
    pub regulated: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { interval: None, points: 2001, refine_rounds: 3, regulated: false }
    }
}

impl ScanConfig {
    pub fn regulated() -> Self {
        ScanConfig { regulated: true, ..Self::default() }
    }

    pub fn over(mut self, lo: f64, hi: f64) -> Self {
        self.interval = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostPoint {
    pub b: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestResponseScan {
    pub prosumer: usize,
    /// The full bid vector used; entry `prosumer` holds the bid scanned against.
    pub bids: Vec<f64>,
    pub interval: (f64, f64),
    /// All evaluated points, sorted by bid.
    pub samples: Vec<CostPoint>,
    /// Refined local minima, sorted by bid.
    pub local_minima: Vec<CostPoint>,
    pub best: CostPoint,
}

impl BestResponseScan {
    /// Cost at the bid currently held in `bids[prosumer]`.
    pub fn current(&self) -> CostPoint {
        let b = self.bids[self.prosumer];
        self.samples.iter().find(|s| s.b == b).copied().expect("current bid is always sampled")
    }
}

/// Bid interval used when none is configured.
///
/// Covers the heuristic bids `D_i − p + a(2c_i p + d_i)` for `p` between
/// `min(0, D_i)` and `max(0, D_i) + Σ|D_j|`, together with the other bids,
/// then widens the span threefold around its center.
pub fn auto_interval(scenario: &Scenario, i: usize, bids: &[f64]) -> (f64, f64) {
    let pr = scenario.prosumer(i);
    let a = scenario.a();
    let spread: f64 = scenario.demands().iter().map(|d| d.abs()).sum();
    let heuristic = |p: f64| pr.demand - p + a * pr.marginal(p);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let candidates = [heuristic(pr.demand.min(0.0)), heuristic(pr.demand.max(0.0) + spread)];
    let others = bids.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| *b);
    for v in candidates.into_iter().chain(others).chain(std::iter::once(bids[i])) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let center = 0.5 * (lo + hi);
    let half = (1.5 * (hi - lo)).max(1e-3 * (1.0 + center.abs()));
    (center - half, center + half)
}

fn cost_at(scenario: &Scenario, bids: &[f64], i: usize, b_i: f64, regulated: bool) -> Result<f64> {
    let mut trial = bids.to_vec();
    trial[i] = b_i;
    market::prosumer_cost(scenario, &trial, i, regulated)
}

fn evaluate(scenario: &Scenario, bids: &[f64], i: usize, xs: &[f64], regulated: bool) -> Result<Vec<CostPoint>> {
    xs.par_iter().map(|&b| cost_at(scenario, bids, i, b, regulated).map(|gamma| CostPoint { b, gamma })).collect()
}

/// Scans prosumer `i`'s cost over its own bid with the others fixed at `bids`.
///
/// Each coarse local minimum is refined `refine_rounds` times on a 21-point
/// bracket whose width shrinks tenfold per round. Minima closer than `1e-5`
/// are merged.
pub fn best_response(scenario: &Scenario, i: usize, bids: &[f64], config: &ScanConfig) -> Result<BestResponseScan> {
    if bids.len() != scenario.size() {
        return Err(Error::DimensionMismatch { expected: scenario.size(), found: bids.len() });
    }
    if i >= scenario.size() {
        return Err(Error::InvalidScenario(format!("prosumer index {} out of range", i + 1)));
    }
    let (lo, hi) = config.interval.unwrap_or_else(|| auto_interval(scenario, i, bids));
    if lo >= hi || !lo.is_finite() || !hi.is_finite() || config.points < 3 {
        return Err(Error::ScanIntervalEmpty { lo, hi });
    }
    let step = (hi - lo) / (config.points - 1) as f64;
    let grid: Vec<f64> = (0..config.points).map(|k| lo + step * k as f64).collect();
    let coarse = evaluate(scenario, bids, i, &grid, config.regulated)?;

    let mut samples = coarse.clone();
    let mut minima = Vec::new();
    for k in 0..coarse.len() {
        let left_higher = k == 0 || coarse[k - 1].gamma > coarse[k].gamma;
        let right_not_lower = k + 1 == coarse.len() || coarse[k + 1].gamma >= coarse[k].gamma;
        if !(left_higher && right_not_lower) {
            continue;
        }
        let mut center = coarse[k];
        let mut half = step;
        for _ in 0..config.refine_rounds {
            let xs: Vec<f64> = (0..=20)
                .map(|j| center.b - half + half * j as f64 / 10.0)
                .filter(|x| *x >= lo && *x <= hi)
                .collect();
            let pts = evaluate(scenario, bids, i, &xs, config.regulated)?;
            for p in &pts {
                if p.gamma < center.gamma {
                    center = *p;
                }
            }
            samples.extend(pts);
            half /= 10.0;
        }
        minima.push(center);
    }

    let own = bids[i];
    let current = CostPoint { b: own, gamma: cost_at(scenario, bids, i, own, config.regulated)? };
    samples.push(current);
    samples.sort_by(|x, y| x.b.total_cmp(&y.b));
    samples.dedup_by(|x, y| x.b == y.b);

    minima.sort_by(|x, y| x.b.total_cmp(&y.b));
    let mut merged: Vec<CostPoint> = Vec::with_capacity(minima.len());
    for m in minima {
        match merged.last_mut() {
            Some(last) if (m.b - last.b).abs() <= 1e-5 => {
                if m.gamma < last.gamma {
                    *last = m;
                }
            }
            _ => merged.push(m),
        }
    }
    let best = samples.iter().copied().min_by(|x, y| x.gamma.total_cmp(&y.gamma)).expect("samples are non-empty");
    Ok(BestResponseScan { prosumer: i, bids: bids.to_vec(), interval: (lo, hi), samples, local_minima: merged, best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GneVerification {
    pub is_gne: bool,
    /// `Γ_i(b_i) − min Γ_i` per prosumer.
    pub gaps: Vec<f64>,
    /// Each prosumer's best scanned deviation.
    pub best_responses: Vec<CostPoint>,
}

/// Checks that no prosumer can lower its cost by more than `tol` through a unilateral bid change.
pub fn verify_gne(scenario: &Scenario, bids: &[f64], tol: f64, config: &ScanConfig) -> Result<GneVerification> {
    let mut gaps = Vec::with_capacity(bids.len());
    let mut best_responses = Vec::with_capacity(bids.len());
    for i in 0..scenario.size() {
        let scan = best_response(scenario, i, bids, config)?;
        gaps.push(scan.current().gamma - scan.best.gamma);
        best_responses.push(scan.best);
    }
    let is_gne = gaps.iter().all(|g| *g <= tol);
    Ok(GneVerification { is_gne, gaps, best_responses })
}

/// Two-prosumer game with `a = 1`, identical `c`, `d = 0` and one line limited to `F`.
pub fn example1_scenario(c: f64, d1: f64, d2: f64, limit: f64) -> Result<Scenario> {
    let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, limit)], 1)?;
    Scenario::new(net, vec![Prosumer::new(c, 0.0, d1), Prosumer::new(c, 0.0, d2)], 1.0)
}

/// Three buses on a path; only the line at bus 1 is limited, `a = 1`, `d = 0`.
pub fn example2_scenario(c: f64, demands: [f64; 3], limit: f64) -> Result<Scenario> {
    let lines = vec![LineSpec::new(0, 1, 1.0, limit), LineSpec::new(1, 2, 1.0, f64::INFINITY)];
    let net = NetworkModel::with_default_slack(3, lines)?;
    Scenario::new(net, demands.iter().map(|&d| Prosumer::new(c, 0.0, d)).collect(), 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unique,
    /// Prosumer 1 buys up to the limit; equilibria form a segment.
    MultipleUpper,
    /// Prosumer 2 buys up to the limit; equilibria form a segment.
    MultipleLower,
}

/// Segment of equilibrium bids: `b[free] ∈ [lo, hi]` and `b[other] = b[free] + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BidSegment {
    pub free: usize,
    pub lo: f64,
    pub hi: f64,
    pub offset: f64,
}

impl BidSegment {
    /// The bid pair at position `t ∈ [0, 1]` along the segment.
    pub fn point(&self, t: f64) -> [f64; 2] {
        let x = self.lo + t * (self.hi - self.lo);
        let mut b = [x + self.offset; 2];
        b[self.free] = x;
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GneClassification2Bus {
    pub regime: Regime,
    /// The equilibrium production, identical along a segment.
    pub p: [f64; 2],
    /// Bids for the unique regime, the segment midpoint otherwise.
    pub b: [f64; 2],
    pub lambda: [f64; 2],
    pub segment: Option<BidSegment>,
}

/// Closed-form equilibria of [`example1_scenario`].
pub fn classify_gne_2bus(c: f64, d1: f64, d2: f64, limit: f64) -> GneClassification2Bus {
    let threshold = (2.0 * c + 1.0) * limit / c;
    let gap = d1 - d2;
    let finish = |regime, b: [f64; 2], lambda: [f64; 2], segment| GneClassification2Bus {
        regime,
        p: [d1 + lambda[0] - b[0], d2 + lambda[1] - b[1]],
        b,
        lambda,
        segment,
    };
    if gap.abs() < threshold {
        let mean = c * (d1 + d2);
        let tilt = c / (2.0 * c + 1.0) * gap;
        return finish(Regime::Unique, [mean + tilt, mean - tilt], [mean, mean], None);
    }
    let (buyer, seller, regime) = if gap > 0.0 { (d1, d2, Regime::MultipleUpper) } else { (d2, d1, Regime::MultipleLower) };
    let free = if gap > 0.0 { 1 } else { 0 };
    let segment = BidSegment {
        free,
        lo: 2.0 * c * seller + 2.0 * c * limit,
        hi: 2.0 * c * buyer - 2.0 * (c + 1.0) * limit,
        offset: 2.0 * limit,
    };
    let b = segment.point(0.5);
    // The buyer clears at b − F, the seller at b + F.
    let mut lambda = [0.0; 2];
    lambda[free] = b[free] + limit;
    lambda[1 - free] = b[1 - free] - limit;
    finish(regime, b, lambda, Some(segment))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BrTermination {
    FixedPoint,
    /// The sweep state revisited one seen `period` sweeps earlier.
    Cycle { period: usize },
    MaxIterExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrIteration {
    pub termination: BrTermination,
    /// Bid vectors after each sweep, starting with `b0`.
    pub trajectory: Vec<Vec<f64>>,
    pub final_check: GneVerification,
}

impl BrIteration {
    pub fn found_fixed_point(&self) -> bool {
        self.termination == BrTermination::FixedPoint
    }
}

/// Sequential best-response sweeps from `b0`.
///
/// Before each sweep the current bids are checked with [`verify_gne`]. A prosumer
/// whose current bid is already within `tol` of its best keeps it.
pub fn br_iteration(scenario: &Scenario, b0: &[f64], max_sweeps: usize, tol: f64, config: &ScanConfig) -> Result<BrIteration> {
    let mut bids = b0.to_vec();
    let mut trajectory = vec![bids.clone()];
    let scale = 1.0 + b0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for _ in 0..max_sweeps {
        let check = verify_gne(scenario, &bids, tol, config)?;
        if check.is_gne {
            return Ok(BrIteration { termination: BrTermination::FixedPoint, trajectory, final_check: check });
        }
        for i in 0..scenario.size() {
            let scan = best_response(scenario, i, &bids, config)?;
            if scan.current().gamma - scan.best.gamma > tol {
                bids[i] = scan.best.b;
            }
        }
        let revisit = trajectory
            .iter()
            .rev()
            .position(|old| old.iter().zip(&bids).all(|(x, y)| (x - y).abs() <= 1e-6 * scale));
        trajectory.push(bids.clone());
        if let Some(back) = revisit {
            let check = verify_gne(scenario, &bids, tol, config)?;
            let termination = if check.is_gne { BrTermination::FixedPoint } else { BrTermination::Cycle { period: back + 1 } };
            return Ok(BrIteration { termination, trajectory, final_check: check });
        }
    }
    let check = verify_gne(scenario, &bids, tol, config)?;
    let termination = if check.is_gne { BrTermination::FixedPoint } else { BrTermination::MaxIterExceeded };
    Ok(BrIteration { termination, trajectory, final_check: check })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Region {
    /// Line uncongested.
    #[serde(rename = "B_M")]
    Middle,
    /// Bus 1 sells up to the limit.
    #[serde(rename = "B_L")]
    Lower,
    /// Bus 1 buys up to the limit.
    #[serde(rename = "B_U")]
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionPrices {
    pub region: Region,
    pub lambda: [f64; 3],
}

/// Closed-form clearing prices on the three-bus topology of [`example2_scenario`].
///
/// Requires three buses, `a = 1`, a limited line whose only endpoint among
/// the buses is bus 1 as a leaf, and an unlimited line joining the other two.
pub fn example2_region(scenario: &Scenario, bids: &[f64]) -> Result<RegionPrices> {
    let net = scenario.network();
    if net.bus_count() != 3 || net.line_count() != 2 {
        return Err(Error::WrongTopology("expected 3 buses and 2 lines".into()));
    }
    if scenario.a() != 1.0 {
        return Err(Error::WrongTopology(format!("expected a = 1, got {}", scenario.a())));
    }
    let touches_first = |l: &LineSpec| l.from == 0 || l.to == 0;
    let limited: Vec<&LineSpec> = net.lines().iter().filter(|l| l.is_limited()).collect();
    let [line] = limited.as_slice() else {
        return Err(Error::WrongTopology("expected exactly one limited line".into()));
    };
    if !touches_first(line) || net.lines().iter().filter(|l| touches_first(l)).count() != 1 {
        return Err(Error::WrongTopology("the limited line must connect bus 1 as a leaf".into()));
    }
    if bids.len() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: bids.len() });
    }
    let f = line.limit;
    let (b1, rest) = (bids[0], bids[1] + bids[2]);
    let (region, lambda) = if b1 <= (rest - 3.0 * f) / 2.0 {
        (Region::Lower, [b1 + f, (rest - f) / 2.0, (rest - f) / 2.0])
    } else if b1 >= (rest + 3.0 * f) / 2.0 {
        (Region::Upper, [b1 - f, (rest + f) / 2.0, (rest + f) / 2.0])
    } else {
        let mean = (b1 + rest) / 3.0;
        (Region::Middle, [mean; 3])
    };
    Ok(RegionPrices { region, lambda })
}

/// Writes scan samples as CSV with columns `prosumer,b,gamma` (1-based prosumer).
pub fn write_scan_csv<W: Write>(scan: &BestResponseScan, out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        prosumer: usize,
        b: f64,
        gamma: f64,
    }
    let mut writer = csv::Writer::from_writer(out);
    for s in &scan.samples {
        writer.serialize(Row { prosumer: scan.prosumer + 1, b: s.b, gamma: s.gamma })?;
    }
    writer.flush()?;
    Ok(())
}
