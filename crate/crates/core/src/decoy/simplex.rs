//! Dense two-phase tableau simplex for small box-bounded linear programs.
//!
//! Pivoting is deterministic: the most negative reduced cost enters, and
//! after [`DEGENERATE_SWITCH`] consecutive degenerate pivots the solver
//! falls back to Bland's smallest-index rule until the objective moves
//! again, which rules out cycling. Every returned optimum is re-checked
//! against the original constraints.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-10;
const VERIFY_TOL: f64 = 1e-8;
const MAX_PIVOTS: usize = 200_000;
const DEGENERATE_SWITCH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `lower <= coeffs · x <= upper`; either side may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    /// Finite box bounds on every variable.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            sense,
            objective,
            lower,
            upper,
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, coeffs: Vec<f64>, lower: f64, upper: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            lower,
            upper,
        });
    }

    /// Largest violation of any bound or constraint at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.worst_violation(x).0
    }

    /// Largest violation and the name of the bound or constraint at fault.
    pub fn worst_violation(&self, x: &[f64]) -> (f64, String) {
        let mut worst = (0.0f64, String::new());
        let mut note = |v: f64, name: &dyn Fn() -> String| {
            if v > worst.0 {
                worst = (v, name());
            }
        };
        for (j, &v) in x.iter().enumerate() {
            note((self.lower[j] - v).max(v - self.upper[j]), &|| format!("bounds of variable {j}"));
        }
        for c in &self.constraints {
            let scale = c.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs())).max(1e-300);
            let ax: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            note(((c.lower - ax) / scale).max((ax - c.upper) / scale), &|| c.name.clone());
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Le,
    Ge,
    Eq,
}

struct Row {
    coeffs: Vec<f64>,
    kind: Kind,
    rhs: f64,
    /// Index into the original constraint list, `None` for variable bounds.
    origin: Option<usize>,
}

struct Tableau {
    /// `m` rows of `cols + 1` entries, rhs last.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    pivots: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize, obj: &mut [f64]) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        self.t[r][c] = 1.0;
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for (v, pv) in obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Reduced-cost row for minimizing `costs`; last entry is `-z`.
    fn objective_row(&self, costs: &[f64]) -> Vec<f64> {
        let mut obj = costs.to_vec();
        obj.push(0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                for (v, tv) in obj.iter_mut().zip(&self.t[i]) {
                    *v -= cb * tv;
                }
            }
        }
        obj
    }

    /// Minimizes over the columns flagged in `allowed`.
    /// Ratio test for entering column `c`. Basic variables flagged in
    /// `locked` are held at zero, so any nonzero entry in their row blocks.
    /// Outside Bland mode a two-pass (Harris) test picks the largest pivot
    /// among rows within [`HARRIS_TOL`] of the minimum ratio.
    fn leaving_row(&self, c: usize, bland: bool, locked: &[bool]) -> Option<(usize, f64)> {
        let candidate = |i: usize| -> Option<(f64, f64)> {
            let a = self.t[i][c];
            if locked[self.basis[i]] {
                return (a.abs() > PIVOT_TOL).then_some((0.0, a.abs()));
            }
            (a > PIVOT_TOL).then(|| (self.rhs(i).max(0.0) / a, a))
        };
        let rows = 0..self.t.len();
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for i in rows {
                if let Some((ratio, _)) = candidate(i) {
                    let better = match best {
                        None => true,
                        Some((r, b)) => ratio < b || (ratio == b && self.basis[i] < self.basis[r]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            return best;
        }
        let mut limit = f64::INFINITY;
        for i in rows.clone() {
            if let Some((_, a)) = candidate(i) {
                let slack = if locked[self.basis[i]] { 0.0 } else { HARRIS_TOL };
                limit = limit.min((self.rhs(i).max(0.0) + slack) / a);
            }
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for i in rows {
            if let Some((ratio, a)) = candidate(i) {
                if ratio <= limit && best.is_none_or(|(_, _, ba)| a > ba) {
                    best = Some((i, ratio, a));
                }
            }
        }
        best.map(|(i, ratio, _)| (i, ratio))
    }

    /// Minimizes over the columns flagged in `allowed`.
    fn optimize(&mut self, obj: &mut [f64], allowed: &[bool], locked: &[bool]) -> Result<()> {
        let mut degenerate_run = 0usize;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Numerical(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let entering = if bland {
                (0..self.cols).find(|&j| allowed[j] && obj[j] < -COST_TOL)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..self.cols {
                    if allowed[j] && obj[j] < -COST_TOL && best.is_none_or(|(_, v)| obj[j] < v) {
                        best = Some((j, obj[j]));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else {
                return Ok(());
            };

            let leave = self.leaving_row(c, bland, locked);
            let Some((r, ratio)) = leave else {
                return Err(Error::Numerical(
                    "unbounded direction in a box-bounded program".into(),
                ));
            };
            if ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c, obj);
        }
    }
}

/// Solves `lp` to optimality or reports infeasibility with the names of the
/// constraints that could not be satisfied.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n_vars();
    if lp.lower.len() != n || lp.upper.len() != n {
        return Err(Error::Precondition("bound vectors must match the objective length".into()));
    }
    for j in 0..n {
        if !(lp.lower[j].is_finite() && lp.upper[j].is_finite()) {
            return Err(Error::Precondition(format!("variable {j} needs finite bounds")));
        }
        if lp.lower[j] > lp.upper[j] {
            return Err(Error::Infeasible {
                violated: vec![format!("bounds of variable {j}")],
            });
        }
    }

    // Shift to y = x - lower, scale rows to unit max coefficient.
    let mut rows: Vec<Row> = Vec::new();
    for (ci, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(Error::Precondition(format!("constraint `{}` has wrong length", c.name)));
        }
        if c.lower > c.upper || c.lower.is_nan() || c.upper.is_nan() {
            return Err(Error::Infeasible {
                violated: vec![c.name.clone()],
            });
        }
        let offset: f64 = c.coeffs.iter().zip(&lp.lower).map(|(a, l)| a * l).sum();
        let scale = c.coeffs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let (lo, hi) = (c.lower - offset, c.upper - offset);
        if scale == 0.0 {
            if lo > FEAS_TOL || hi < -FEAS_TOL {
                return Err(Error::Infeasible {
                    violated: vec![c.name.clone()],
                });
            }
            continue;
        }
        let coeffs: Vec<f64> = c.coeffs.iter().map(|a| a / scale).collect();
        let (lo, hi) = (lo / scale, hi / scale);
        if lo == hi {
            rows.push(Row {
                coeffs,
                kind: Kind::Eq,
                rhs: lo,
                origin: Some(ci),
            });
            continue;
        }
        if lo.is_finite() {
            rows.push(Row {
                coeffs: coeffs.clone(),
                kind: Kind::Ge,
                rhs: lo,
                origin: Some(ci),
            });
        }
        if hi.is_finite() {
            rows.push(Row {
                coeffs,
                kind: Kind::Le,
                rhs: hi,
                origin: Some(ci),
            });
        }
    }
    for j in 0..n {
        let mut coeffs = vec![0.0; n];
        coeffs[j] = 1.0;
        rows.push(Row {
            coeffs,
            kind: Kind::Le,
            rhs: lp.upper[j] - lp.lower[j],
            origin: None,
        });
    }
    for row in &mut rows {
        if row.rhs < 0.0 {
            row.rhs = -row.rhs;
            row.coeffs.iter_mut().for_each(|a| *a = -*a);
            row.kind = match row.kind {
                Kind::Le => Kind::Ge,
                Kind::Ge => Kind::Le,
                Kind::Eq => Kind::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.kind != Kind::Eq).count();
    let n_art = rows.iter().filter(|r| r.kind != Kind::Le).count();
    let cols = n + n_slack + n_art;
    let art_start = n + n_slack;
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_row = Vec::new();
    let (mut s, mut a) = (n, art_start);
    for (i, row) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(&row.coeffs);
        t[i][cols] = row.rhs;
        match row.kind {
            Kind::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Kind::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a] = 1.0;
                basis[i] = a;
                art_row.push(i);
                a += 1;
            }
            Kind::Eq => {
                t[i][a] = 1.0;
                basis[i] = a;
                art_row.push(i);
                a += 1;
            }
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        cols,
        pivots: 0,
    };

    if n_art > 0 {
        let mut costs = vec![0.0; cols];
        costs[art_start..].iter_mut().for_each(|c| *c = 1.0);
        let mut obj = tab.objective_row(&costs);
        tab.optimize(&mut obj, &vec![true; cols], &vec![false; cols])?;
        let infeasibility = -obj[cols];
        if infeasibility > FEAS_TOL {
            let mut violated: Vec<String> = Vec::new();
            for (i, &b) in tab.basis.iter().enumerate() {
                if b >= art_start && tab.rhs(i) > FEAS_TOL {
                    let origin = rows[art_row[b - art_start]].origin;
                    let name = origin.map_or_else(|| "variable bound".to_string(), |o| lp.constraints[o].name.clone());
                    if !violated.contains(&name) {
                        violated.push(name);
                    }
                }
            }
            return Err(Error::Infeasible { violated });
        }
        // Pivot zero-level artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] >= art_start {
                let best = (0..art_start)
                    .map(|j| (j, tab.t[i][j].abs()))
                    .filter(|&(_, v)| v > PIVOT_TOL)
                    .max_by(|x, y| x.1.total_cmp(&y.1));
                if let Some((j, _)) = best {
                    tab.pivot(i, j, &mut obj);
                }
            }
        }
    }

    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut costs = vec![0.0; cols];
    for j in 0..n {
        costs[j] = sign * lp.objective[j];
    }
    let mut obj = tab.objective_row(&costs);
    let allowed: Vec<bool> = (0..cols).map(|j| j < art_start).collect();
    let locked: Vec<bool> = allowed.iter().map(|a| !a).collect();
    tab.optimize(&mut obj, &allowed, &locked)?;

    let mut x = lp.lower.clone();
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] += tab.rhs(i);
        }
    }
    for j in 0..n {
        x[j] = x[j].clamp(lp.lower[j], lp.upper[j]);
    }
    let (violation, culprit) = lp.worst_violation(&x);
    if violation > VERIFY_TOL {
        return Err(Error::Numerical(format!(
            "simplex optimum violates `{culprit}` by {violation:.3e}"
        )));
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        x,
        objective,
        pivots: tab.pivots,
    })
}
