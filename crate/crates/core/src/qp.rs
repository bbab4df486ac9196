//! Dense strictly convex quadratic programs with multipliers.
//!
//! ```text
//!     minimize     ½ xᵀ H x + gᵀ x
//!     subject to   A x  = b                 : y  (free)
//!                  lo ≤ C x ≤ up            : μ_lo, μ_up ≥ 0
//! ```
//!
//! Multipliers follow the convention
//! `H x + g − Aᵀ y − Cᵀ (μ_lo − μ_up) = 0`.
//!
//! The solver is a dual active-set method in the style of Goldfarb and Idnani:
//! it starts from the equality-constrained minimizer and adds violated
//! inequalities one at a time, dropping working constraints whose multiplier
//! would turn negative. No feasible starting point is needed and an empty
//! feasible set is detected when a violated constraint is linearly dependent
//! on the working set with no multiplier left to release. Each working-set
//! change re-solves the reduced KKT system through the Cholesky factor of `H`,
//! which is adequate for the few-dozen-variable problems this crate builds.
//!
//! At degenerate optima the multipliers are not unique; the ones returned are
//! those reached by the active-set path.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("equality constraints are linearly dependent")]
    DependentEqualities,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_lower: DVector<f64>,
    pub ineq_upper: DVector<f64>,
}

impl QuadraticProgram {
    /// Unconstrained program `½ xᵀ H x + gᵀ x`.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        QuadraticProgram {
            hessian,
            linear,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_lower: DVector::zeros(0),
            ineq_upper: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.eq_matrix = matrix;
        self.eq_rhs = rhs;
        self
    }

    /// Two-sided rows `lower ≤ C x ≤ upper`; infinite bounds are allowed.
    pub fn with_inequalities(mut self, matrix: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.ineq_matrix = matrix;
        self.ineq_lower = lower;
        self.ineq_upper = upper;
        self
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eq_count(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn ineq_count(&self) -> usize {
        self.ineq_lower.len()
    }

    fn check_dimensions(&self) -> Result<(), QpError> {
        let n = self.dim();
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(QpError::DimensionMismatch { what, expected, found })
            }
        };
        check("hessian rows", n, self.hessian.nrows())?;
        check("hessian columns", n, self.hessian.ncols())?;
        check("equality columns", n, self.eq_matrix.ncols())?;
        check("equality rows", self.eq_rhs.len(), self.eq_matrix.nrows())?;
        check("inequality columns", n, self.ineq_matrix.ncols())?;
        check("inequality rows", self.ineq_lower.len(), self.ineq_matrix.nrows())?;
        check("inequality upper bounds", self.ineq_lower.len(), self.ineq_upper.len())
    }

    /// Feasibility tolerance for inequality row `i` on the given side.
    fn row_tolerance(bound: f64) -> f64 {
        FEAS_TOL * (1.0 + bound.abs())
    }
}

/// Relative feasibility and stationarity tolerance.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals_lower: DVector<f64>,
    pub ineq_duals_upper: DVector<f64>,
    /// Inequality rows active at the solution, sorted by row.
    pub active_set: Vec<(usize, Side)>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpSolution {
    pub fn objective(&self, qp: &QuadraticProgram) -> f64 {
        0.5 * self.x.dot(&(&qp.hessian * &self.x)) + qp.linear.dot(&self.x)
    }
}

/// Component-wise KKT violations of a candidate primal-dual point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_equality: f64,
    pub primal_inequality: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
    /// Maximum of the above after scaling by `1 + ‖g‖∞` (stationarity) and
    /// `1 + |rhs|` (feasibility, complementarity).
    pub scaled_max: f64,
}

#[derive(Clone, Copy)]
struct Member {
    row: usize,
    kind: Kind,
    mult: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Eq,
    Ineq(Side),
}

struct Working<'a> {
    qp: &'a QuadraticProgram,
    chol: Cholesky<f64, Dyn>,
}

impl<'a> Working<'a> {
    /// Constraint normal written so the constraint reads `nᵀx ≥ target` (or `=`).
    fn normal(&self, row: usize, kind: Kind) -> DVector<f64> {
        match kind {
            Kind::Eq => self.qp.eq_matrix.row(row).transpose(),
            Kind::Ineq(Side::Lower) => self.qp.ineq_matrix.row(row).transpose(),
            Kind::Ineq(Side::Upper) => -self.qp.ineq_matrix.row(row).transpose(),
        }
    }

    fn target(&self, row: usize, kind: Kind) -> f64 {
        match kind {
            Kind::Eq => self.qp.eq_rhs[row],
            Kind::Ineq(Side::Lower) => self.qp.ineq_lower[row],
            Kind::Ineq(Side::Upper) => -self.qp.ineq_upper[row],
        }
    }

    fn normals(&self, set: &[Member]) -> DMatrix<f64> {
        let n = self.qp.dim();
        let mut m = DMatrix::zeros(n, set.len());
        for (k, member) in set.iter().enumerate() {
            m.set_column(k, &self.normal(member.row, member.kind));
        }
        m
    }

    /// Solves `H x + g = N u`, `Nᵀ x = t` for the working set.
    fn solve_point(&self, set: &[Member]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n_mat = self.normals(set);
        let hinv_g = self.chol.solve(&self.qp.linear);
        if set.is_empty() {
            return Some((-hinv_g, DVector::zeros(0)));
        }
        let hinv_n = self.chol.solve(&n_mat);
        let schur = n_mat.transpose() * &hinv_n;
        let targets = DVector::from_iterator(set.len(), set.iter().map(|m| self.target(m.row, m.kind)));
        let rhs = targets + n_mat.transpose() * &hinv_g;
        let u = schur.cholesky()?.solve(&rhs);
        let x = &hinv_n * &u - hinv_g;
        Some((x, u))
    }

    /// Primal and dual directions for raising the multiplier of `normal` by one.
    fn step(&self, set: &[Member], normal: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let hinv_p = self.chol.solve(normal);
        if set.is_empty() {
            return Some((hinv_p, DVector::zeros(0)));
        }
        let n_mat = self.normals(set);
        let hinv_n = self.chol.solve(&n_mat);
        let schur = n_mat.transpose() * &hinv_n;
        let r = -schur.cholesky()?.solve(&(n_mat.transpose() * &hinv_p));
        let z = hinv_p + hinv_n * &r;
        Some((z, r))
    }
}

/// Solves the program, returning the unique minimizer with multipliers.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    qp.check_dimensions()?;
    let n = qp.dim();
    let m_in = qp.ineq_count();
    for i in 0..m_in {
        let (lo, up) = (qp.ineq_lower[i], qp.ineq_upper[i]);
        if lo.is_nan() || up.is_nan() || lo > up {
            return Err(QpError::Infeasible);
        }
    }
    if n == 0 {
        return finish(qp, DVector::zeros(0), &[], 0);
    }
    let chol = Cholesky::new(qp.hessian.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let work = Working { qp, chol };

    let mut set: Vec<Member> = (0..qp.eq_count()).map(|row| Member { row, kind: Kind::Eq, mult: 0.0 }).collect();
    let (mut x, u) = work.solve_point(&set).ok_or(QpError::DependentEqualities)?;
    for (member, value) in set.iter_mut().zip(u.iter()) {
        member.mult = *value;
    }
    if qp.eq_count() > 0 {
        let resid = &qp.eq_matrix * &x - &qp.eq_rhs;
        let tol = FEAS_TOL * (1.0 + qp.eq_rhs.amax());
        if resid.amax() > tol * 1e3 {
            return Err(QpError::DependentEqualities);
        }
    }

    let cap = 50 * (n + m_in).max(1);
    let mut iterations = 0;
    loop {
        let Some((row, side)) = most_violated(qp, &x, &set) else {
            return finish(qp, x, &set, iterations);
        };
        let kind = Kind::Ineq(side);
        let normal = work.normal(row, kind);
        let target = work.target(row, kind);
        let mut added_mult = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(QpError::IterationLimit(cap));
            }
            let (z, r) = work.step(&set, &normal).ok_or(QpError::Infeasible)?;
            let slope = normal.dot(&z);
            let curvature = normal.dot(&work.chol.solve(&normal));
            let primal_step = if slope > 1e-12 * curvature.max(f64::MIN_POSITIVE) {
                ((target - normal.dot(&x)) / slope).max(0.0)
            } else {
                f64::INFINITY
            };
            let mut dual_step = f64::INFINITY;
            let mut drop = None;
            for (k, member) in set.iter().enumerate() {
                if member.kind != Kind::Eq && r[k] < 0.0 {
                    let t = member.mult / -r[k];
                    if t < dual_step {
                        dual_step = t;
                        drop = Some(k);
                    }
                }
            }
            if primal_step.is_infinite() && dual_step.is_infinite() {
                return Err(QpError::Infeasible);
            }
            let t = primal_step.min(dual_step);
            if primal_step.is_finite() {
                x += &z * t;
            }
            for (k, member) in set.iter_mut().enumerate() {
                member.mult += t * r[k];
            }
            added_mult += t;
            if primal_step <= dual_step {
                set.push(Member { row, kind, mult: added_mult });
                if let Some((x_new, u_new)) = work.solve_point(&set) {
                    x = x_new;
                    for (member, value) in set.iter_mut().zip(u_new.iter()) {
                        member.mult = if member.kind == Kind::Eq { *value } else { value.max(0.0) };
                    }
                }
                break;
            }
            let k = drop.expect("finite dual step has a blocking constraint");
            set.remove(k);
        }
    }
}

/// Most violated inequality outside the working set (least row index on ties).
fn most_violated(qp: &QuadraticProgram, x: &DVector<f64>, set: &[Member]) -> Option<(usize, Side)> {
    let values = &qp.ineq_matrix * x;
    let mut best: Option<(f64, usize, Side)> = None;
    for i in 0..qp.ineq_count() {
        for side in [Side::Lower, Side::Upper] {
            if set.iter().any(|m| m.row == i && m.kind == Kind::Ineq(side)) {
                continue;
            }
            let (bound, violation) = match side {
                Side::Lower => (qp.ineq_lower[i], qp.ineq_lower[i] - values[i]),
                Side::Upper => (qp.ineq_upper[i], values[i] - qp.ineq_upper[i]),
            };
            if !bound.is_finite() {
                continue;
            }
            let scaled = violation / (1.0 + bound.abs());
            if violation > QuadraticProgram::row_tolerance(bound) && best.is_none_or(|(v, _, _)| scaled > v) {
                best = Some((scaled, i, side));
            }
        }
    }
    best.map(|(_, i, side)| (i, side))
}

fn finish(qp: &QuadraticProgram, x: DVector<f64>, set: &[Member], iterations: usize) -> Result<QpSolution, QpError> {
    let mut eq_duals = DVector::zeros(qp.eq_count());
    let mut lower = DVector::zeros(qp.ineq_count());
    let mut upper = DVector::zeros(qp.ineq_count());
    let mut active_set = Vec::new();
    for member in set {
        match member.kind {
            Kind::Eq => eq_duals[member.row] = member.mult,
            Kind::Ineq(side) => {
                let mult = member.mult.max(0.0);
                match side {
                    Side::Lower => lower[member.row] = mult,
                    Side::Upper => upper[member.row] = mult,
                }
                active_set.push((member.row, side));
            }
        }
    }
    active_set.sort();
    let mut solution = QpSolution {
        x,
        eq_duals,
        ineq_duals_lower: lower,
        ineq_duals_upper: upper,
        active_set,
        kkt_residual: 0.0,
        iterations,
    };
    solution.kkt_residual = kkt_residual(qp, &solution)?.scaled_max;
    Ok(solution)
}

/// Evaluates the KKT conditions of `qp` at `solution`.
pub fn kkt_residual(qp: &QuadraticProgram, solution: &QpSolution) -> Result<KktReport, QpError> {
    qp.check_dimensions()?;
    let dims = [
        ("primal", qp.dim(), solution.x.len()),
        ("equality duals", qp.eq_count(), solution.eq_duals.len()),
        ("lower duals", qp.ineq_count(), solution.ineq_duals_lower.len()),
        ("upper duals", qp.ineq_count(), solution.ineq_duals_upper.len()),
    ];
    for (what, expected, found) in dims {
        if expected != found {
            return Err(QpError::DimensionMismatch { what, expected, found });
        }
    }
    if qp.dim() == 0 {
        return Ok(KktReport::default());
    }
    let x = &solution.x;
    let net_ineq = &solution.ineq_duals_lower - &solution.ineq_duals_upper;
    let grad = &qp.hessian * x + &qp.linear
        - qp.eq_matrix.transpose() * &solution.eq_duals
        - qp.ineq_matrix.transpose() * net_ineq;
    let stationarity = grad.amax();
    let stat_scale = 1.0 + qp.linear.amax();

    let mut report = KktReport { stationarity, scaled_max: stationarity / stat_scale, ..Default::default() };
    let eq_values = &qp.eq_matrix * x;
    for i in 0..qp.eq_count() {
        let v = (eq_values[i] - qp.eq_rhs[i]).abs();
        report.primal_equality = report.primal_equality.max(v);
        report.scaled_max = report.scaled_max.max(v / (1.0 + qp.eq_rhs[i].abs()));
    }
    let values = &qp.ineq_matrix * x;
    for i in 0..qp.ineq_count() {
        let sides = [
            (qp.ineq_lower[i], values[i] - qp.ineq_lower[i], solution.ineq_duals_lower[i]),
            (qp.ineq_upper[i], qp.ineq_upper[i] - values[i], solution.ineq_duals_upper[i]),
        ];
        for (bound, slack, mult) in sides {
            let sign = (-mult).max(0.0);
            report.dual_sign = report.dual_sign.max(sign);
            report.scaled_max = report.scaled_max.max(sign / stat_scale);
            if !bound.is_finite() {
                // An infinite bound can only carry a zero multiplier.
                report.complementarity = report.complementarity.max(mult.abs());
                report.scaled_max = report.scaled_max.max(mult.abs() / stat_scale);
                continue;
            }
            let violation = (-slack).max(0.0);
            report.primal_inequality = report.primal_inequality.max(violation);
            let comp = (mult * slack).abs();
            report.complementarity = report.complementarity.max(comp);
            let scale = 1.0 + bound.abs();
            report.scaled_max = report.scaled_max.max(violation / scale).max(comp / scale);
        }
    }
    Ok(report)
}
