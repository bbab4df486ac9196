//! Network topology, line-flow distribution factors and DC flows.
//!
//! Bus and line indices are zero-based in the library API. Quantities passed
//! to [`NetworkModel::line_flows`] are *withdrawals* (positive for a buyer),
//! so a unit withdrawal at bus `i` produces flow `π_il` on line `l`, measured
//! positive in the line's `from → to` orientation.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A transmission line between two buses.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSpec {
    pub from: usize,
    pub to: usize,
    /// DC susceptance-style weight (per unit), strictly positive.
    pub weight: f64,
    /// Symmetric flow limit `F_l`; `f64::INFINITY` marks an unlimited line.
    pub limit: f64,
}

impl LineSpec {
    pub fn new(from: usize, to: usize, weight: f64, limit: f64) -> Self {
        LineSpec { from, to, weight, limit }
    }

    pub fn is_limited(&self) -> bool {
        self.limit.is_finite()
    }

    /// The same line with `from` and `to` swapped.
    pub fn reversed(&self) -> Self {
        LineSpec { from: self.to, to: self.from, ..self.clone() }
    }
}

/// Immutable network model with its distribution factor matrix `Π` (buses × lines).
#[derive(Debug, Clone)]
pub struct NetworkModel {
    bus_count: usize,
    lines: Vec<LineSpec>,
    slack: usize,
    ptdf: DMatrix<f64>,
}

impl NetworkModel {
    /// Builds the network and its distribution factors.
    ///
    /// `Π` is formed from the reduced incidence matrix `C̃` (slack row removed)
    /// as `Π̃ = -(C̃ B C̃ᵀ)⁻¹ C̃ B`, with an all-zero row reinserted at the slack.
    pub fn build(bus_count: usize, lines: Vec<LineSpec>, slack: usize) -> Result<Self> {
        if bus_count == 0 {
            return Err(Error::InvalidScenario("network has no buses".into()));
        }
        if slack >= bus_count {
            return Err(Error::InvalidScenario(format!(
                "slack bus {} out of range for {} buses",
                slack + 1,
                bus_count
            )));
        }
        for (l, line) in lines.iter().enumerate() {
            if line.from >= bus_count || line.to >= bus_count {
                return Err(Error::InvalidLine { line: l, reason: "endpoint out of range".into() });
            }
            if line.from == line.to {
                return Err(Error::InvalidLine { line: l, reason: "self loop".into() });
            }
            if line.weight <= 0.0 || !line.weight.is_finite() {
                return Err(Error::NonpositiveWeight { line: l, weight: line.weight });
            }
            if line.limit.is_nan() || line.limit < 0.0 {
                return Err(Error::InvalidLine { line: l, reason: format!("negative limit {}", line.limit) });
            }
        }
        if let Some(bus) = first_unreachable(bus_count, &lines) {
            return Err(Error::DisconnectedGraph { bus });
        }

        let reduced = reduced_index(bus_count, slack);
        let n = bus_count - 1;
        let laplacian = reduced_laplacian(bus_count, &lines, slack);
        let mut rhs = DMatrix::zeros(n, lines.len());
        for (l, line) in lines.iter().enumerate() {
            if let Some(r) = reduced[line.from] {
                rhs[(r, l)] -= line.weight;
            }
            if let Some(r) = reduced[line.to] {
                rhs[(r, l)] += line.weight;
            }
        }
        let reduced_ptdf = if n == 0 {
            DMatrix::zeros(0, lines.len())
        } else {
            let chol = laplacian.cholesky().ok_or(Error::SingularLaplacian)?;
            chol.solve(&rhs)
        };
        let mut ptdf = DMatrix::zeros(bus_count, lines.len());
        for (bus, r) in reduced.iter().enumerate() {
            if let Some(r) = *r {
                ptdf.set_row(bus, &reduced_ptdf.row(r));
            }
        }
        Ok(NetworkModel { bus_count, lines, slack, ptdf })
    }

    /// Builds with the default slack, the highest-index bus.
    pub fn with_default_slack(bus_count: usize, lines: Vec<LineSpec>) -> Result<Self> {
        Self::build(bus_count, lines, bus_count.saturating_sub(1))
    }

    pub fn bus_count(&self) -> usize {
        self.bus_count
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn lines(&self) -> &[LineSpec] {
        &self.lines
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    /// `π_il`.
    pub fn factor(&self, bus: usize, line: usize) -> f64 {
        self.ptdf[(bus, line)]
    }

    pub fn limit(&self, line: usize) -> f64 {
        self.lines[line].limit
    }

    /// Indices of lines with a finite limit.
    pub fn limited_lines(&self) -> impl Iterator<Item = usize> + '_ {
        self.lines.iter().enumerate().filter(|(_, l)| l.is_limited()).map(|(i, _)| i)
    }

    /// True iff the network is a tree. Construction already guarantees connectivity.
    pub fn is_radial(&self) -> bool {
        self.lines.len() + 1 == self.bus_count
    }

    /// Line flows `flow_l = Σ_i π_il q_i` for a withdrawal vector `q`.
    ///
    /// No balance precondition: the map is linear and is applied as is.
    pub fn line_flows(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.bus_count {
            return Err(Error::DimensionMismatch { expected: self.bus_count, found: q.len() });
        }
        let q = DVector::from_column_slice(q);
        Ok((self.ptdf.transpose() * q).iter().copied().collect())
    }

    /// Angle-based DC power flow for a zero-sum *injection* vector.
    ///
    /// Solves the reduced Laplacian system for bus angles (slack angle zero) and
    /// returns `weight × (θ_from − θ_to)` per line. Independent of `Π`; for a
    /// withdrawal vector `q`, `line_flows(q) == dc_flow_oracle(-q)`.
    pub fn dc_flow_oracle(&self, injections: &[f64]) -> Result<Vec<f64>> {
        if injections.len() != self.bus_count {
            return Err(Error::DimensionMismatch { expected: self.bus_count, found: injections.len() });
        }
        let sum: f64 = injections.iter().sum();
        let scale = 1.0 + injections.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sum.abs() > 1e-9 * scale {
            return Err(Error::UnbalancedInjection { sum });
        }
        let reduced = reduced_index(self.bus_count, self.slack);
        let n = self.bus_count - 1;
        let mut rhs = DVector::zeros(n);
        for (bus, &p) in injections.iter().enumerate() {
            if let Some(r) = reduced[bus] {
                rhs[r] = p;
            }
        }
        let angles_reduced = if n == 0 {
            DVector::zeros(0)
        } else {
            let laplacian = reduced_laplacian(self.bus_count, &self.lines, self.slack);
            let lu = laplacian.lu();
            lu.solve(&rhs).ok_or(Error::SingularLaplacian)?
        };
        let angle = |bus: usize| reduced[bus].map_or(0.0, |r| angles_reduced[r]);
        Ok(self
            .lines
            .iter()
            .map(|line| line.weight * (angle(line.from) - angle(line.to)))
            .collect())
    }

    /// A copy with every line limit multiplied by `factor`.
    pub fn with_scaled_limits(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for line in &mut out.lines {
            line.limit *= factor;
        }
        out
    }
}

fn reduced_index(bus_count: usize, slack: usize) -> Vec<Option<usize>> {
    let mut next = 0;
    (0..bus_count)
        .map(|bus| {
            if bus == slack {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect()
}

/// `C̃ B C̃ᵀ` with the slack row and column removed.
fn reduced_laplacian(bus_count: usize, lines: &[LineSpec], slack: usize) -> DMatrix<f64> {
    let reduced = reduced_index(bus_count, slack);
    let n = bus_count - 1;
    let mut lap = DMatrix::zeros(n, n);
    for line in lines {
        let (f, t) = (reduced[line.from], reduced[line.to]);
        if let Some(f) = f {
            lap[(f, f)] += line.weight;
        }
        if let Some(t) = t {
            lap[(t, t)] += line.weight;
        }
        if let (Some(f), Some(t)) = (f, t) {
            lap[(f, t)] -= line.weight;
            lap[(t, f)] -= line.weight;
        }
    }
    lap
}

fn first_unreachable(bus_count: usize, lines: &[LineSpec]) -> Option<usize> {
    let mut adjacency = vec![Vec::new(); bus_count];
    for line in lines {
        adjacency[line.from].push(line.to);
        adjacency[line.to].push(line.from);
    }
    let mut seen = vec![false; bus_count];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(bus) = queue.pop_front() {
        for &next in &adjacency[bus] {
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    seen.iter().position(|s| !s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn path(n: usize) -> Vec<LineSpec> {
        (0..n - 1).map(|i| LineSpec::new(i, i + 1, 1.0, f64::INFINITY)).collect()
    }

    #[test]
    fn two_bus_factors() {
        let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, 5.0)], 1).unwrap();
        assert_abs_diff_eq!(net.factor(0, 0), -1.0, epsilon = 1e-15);
        assert_eq!(net.factor(1, 0), 0.0);
        let flows = net.line_flows(&[-5.0, 5.0]).unwrap();
        assert_abs_diff_eq!(flows[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn two_bus_oracle_unit_injection() {
        let net = NetworkModel::build(2, vec![LineSpec::new(0, 1, 1.0, 5.0)], 1).unwrap();
        let flows = net.dc_flow_oracle(&[1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(flows[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_withdrawal_zero_flow() {
        let net = NetworkModel::with_default_slack(4, path(4)).unwrap();
        assert!(net.line_flows(&[0.0; 4]).unwrap().iter().all(|f| *f == 0.0));
        assert!(net.dc_flow_oracle(&[0.0; 4]).unwrap().iter().all(|f| *f == 0.0));
    }

    #[test]
    fn three_bus_path_matches_oracle() {
        let net = NetworkModel::build(3, path(3), 2).unwrap();
        let q = [1.0, 0.0, -1.0];
        let from_ptdf = net.line_flows(&q).unwrap();
        let injections: Vec<f64> = q.iter().map(|v| -v).collect();
        let oracle = net.dc_flow_oracle(&injections).unwrap();
        for (a, b) in from_ptdf.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        // Withdrawal at bus 1 is served from bus 3: flow runs 3→2→1, i.e. negative.
        assert_abs_diff_eq!(from_ptdf[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(from_ptdf[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_flows_are_still_linear() {
        let net = NetworkModel::build(3, path(3), 2).unwrap();
        let flows = net.line_flows(&[1.0, 1.0, 0.0]).unwrap();
        let a = net.line_flows(&[1.0, 0.0, 0.0]).unwrap();
        let b = net.line_flows(&[0.0, 1.0, 0.0]).unwrap();
        for l in 0..2 {
            assert_abs_diff_eq!(flows[l], a[l] + b[l], epsilon = 1e-14);
        }
    }

    #[test]
    fn slack_row_is_zero() {
        for slack in 0..4 {
            let mut lines = path(4);
            lines.push(LineSpec::new(0, 3, 2.0, 1.0));
            let net = NetworkModel::build(4, lines, slack).unwrap();
            assert!(net.ptdf().row(slack).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn radial_detection() {
        assert!(NetworkModel::with_default_slack(2, path(2)).unwrap().is_radial());
        assert!(NetworkModel::with_default_slack(3, path(3)).unwrap().is_radial());
        let mut triangle = path(3);
        triangle.push(LineSpec::new(0, 2, 1.0, 1.0));
        assert!(!NetworkModel::with_default_slack(3, triangle).unwrap().is_radial());
    }

    #[test]
    fn rejects_bad_inputs() {
        let err = NetworkModel::with_default_slack(3, vec![LineSpec::new(0, 1, 1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::DisconnectedGraph { bus: 2 }));
        let err = NetworkModel::with_default_slack(2, vec![LineSpec::new(0, 1, 0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NonpositiveWeight { line: 0, .. }));
        let err = NetworkModel::with_default_slack(2, vec![LineSpec::new(1, 1, 1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidLine { .. }));
        let net = NetworkModel::with_default_slack(2, path(2)).unwrap();
        assert!(matches!(net.line_flows(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(net.dc_flow_oracle(&[1.0, 0.0]), Err(Error::UnbalancedInjection { .. })));
    }

    #[test]
    fn flipping_a_line_negates_its_column() {
        let mut lines = path(4);
        lines.push(LineSpec::new(1, 3, 0.5, 1.0));
        let net = NetworkModel::build(4, lines.clone(), 3).unwrap();
        lines[1] = lines[1].reversed();
        let flipped = NetworkModel::build(4, lines, 3).unwrap();
        for bus in 0..4 {
            assert_abs_diff_eq!(flipped.factor(bus, 1), -net.factor(bus, 1), epsilon = 1e-14);
            assert_abs_diff_eq!(flipped.factor(bus, 0), net.factor(bus, 0), epsilon = 1e-14);
        }
    }
}
