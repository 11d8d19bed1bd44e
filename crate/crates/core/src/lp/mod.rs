//! Optimization primitives: a dense revised simplex for linear programs and
//! a subgradient method for convex piecewise-linear objectives.

mod bundle;
mod format;
mod mrc_lp;
mod nonsmooth;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use format::write_lp_format;
pub use mrc_lp::{mrc_lp_reformulation, MAX_REFORMULATION_DIM, MAX_REFORMULATION_ROWS};
pub use nonsmooth::{minimize_nonsmooth, FnObjective, Method, NonsmoothObjective, NonsmoothResult, SolverConfig, StopReason};

/// Feasibility tolerance used for status decisions and lazy-row checks.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }

    /// Positive amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs: f64 = self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// `sense cᵀx + offset` subject to rows and per-variable bounds (±∞ allowed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub offset: f64,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `n` variables, all bounded below by zero.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            offset: 0.0,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
        self
    }

    pub fn set_bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.bounds.len() != n {
            return invalid(format!("{} bounds for {} variables", self.bounds.len(), n));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return invalid(format!("row {k} has {} coefficients, expected {n}", c.coeffs.len()));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return invalid(format!("row {k} has non-finite data"));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return invalid(format!("variable {j} has empty bounds [{lo}, {hi}]"));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return invalid("objective has non-finite coefficients");
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .bounds
            .iter()
            .zip(x)
            .map(|(&(lo, hi), &v)| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Dual objective of the final basis' multipliers (optimal status only).
    pub dual_objective: Option<f64>,
    /// Most negative reduced cost of the final basis, as a positive number.
    pub dual_infeasibility: f64,
    /// Multiplier of each constraint: the rate of change of the optimal
    /// value per unit increase of its right-hand side (empty unless optimal).
    pub row_duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    fn failed(status: LpStatus, n: usize, iterations: usize) -> Self {
        Self {
            status,
            x: vec![f64::NAN; n],
            objective_value: f64::NAN,
            dual_objective: None,
            dual_infeasibility: f64::NAN,
            row_duals: Vec::new(),
            iterations,
        }
    }
}

/// How an original variable is expressed through standard-form columns.
#[derive(Debug, Clone)]
enum VarMap {
    /// x = lo + s
    Shifted { col: usize, lo: f64 },
    /// x = hi - s
    Mirrored { col: usize, hi: f64 },
    /// x = s⁺ - s⁻
    Split { pos: usize, neg: usize },
}

/// `min cᵀs, A s = b, s ≥ 0` with b ≥ 0, plus how to map back.
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub n_rows: usize,
    /// Sparse columns (row, value).
    pub cols: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Column usable as the initial basic variable of each row, if any.
    pub slack_of_row: Vec<Option<usize>>,
    /// ±1 per original constraint: the sign applied to make b ≥ 0.
    row_flip: Vec<f64>,
    cost_offset: f64,
    var_map: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut cost = Vec::new();
        let mut var_map = Vec::with_capacity(lp.n_vars());
        let mut cost_offset = sign * lp.offset;
        // extra rows s ≤ hi - lo for doubly bounded variables
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
            let c = sign * lp.objective[j];
            if lo.is_finite() {
                let col = cols.len();
                cols.push(Vec::new());
                cost.push(c);
                cost_offset += c * lo;
                var_map.push(VarMap::Shifted { col, lo });
                if hi.is_finite() {
                    bound_rows.push((col, hi - lo));
                }
            } else if hi.is_finite() {
                let col = cols.len();
                cols.push(Vec::new());
                cost.push(-c);
                cost_offset += c * hi;
                var_map.push(VarMap::Mirrored { col, hi });
            } else {
                let pos = cols.len();
                cols.push(Vec::new());
                cols.push(Vec::new());
                cost.push(c);
                cost.push(-c);
                var_map.push(VarMap::Split { pos, neg: pos + 1 });
            }
        }

        let n_rows = lp.constraints.len() + bound_rows.len();
        let mut rhs = Vec::with_capacity(n_rows);
        let mut slack_of_row = vec![None; n_rows];
        let mut row_flip = Vec::with_capacity(lp.constraints.len());
        for (r, con) in lp.constraints.iter().enumerate() {
            let mut b = con.rhs;
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for (j, &a) in con.coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match var_map[j] {
                    VarMap::Shifted { col, lo } => {
                        b -= a * lo;
                        entries.push((col, a));
                    }
                    VarMap::Mirrored { col, hi } => {
                        b -= a * hi;
                        entries.push((col, -a));
                    }
                    VarMap::Split { pos, neg } => {
                        entries.push((pos, a));
                        entries.push((neg, -a));
                    }
                }
            }
            let slack = match con.relation {
                Relation::Le => Some(1.0),
                Relation::Ge => Some(-1.0),
                Relation::Eq => None,
            };
            let flip = if b < 0.0 { -1.0 } else { 1.0 };
            row_flip.push(flip);
            for (col, a) in entries {
                cols[col].push((r, flip * a));
            }
            if let Some(s) = slack {
                let col = cols.len();
                cols.push(vec![(r, flip * s)]);
                cost.push(0.0);
                if flip * s > 0.0 {
                    slack_of_row[r] = Some(col);
                }
            }
            rhs.push(flip * b);
        }
        for (k, &(col, width)) in bound_rows.iter().enumerate() {
            let r = lp.constraints.len() + k;
            cols[col].push((r, 1.0));
            let s = cols.len();
            cols.push(vec![(r, 1.0)]);
            cost.push(0.0);
            slack_of_row[r] = Some(s);
            rhs.push(width);
        }
        Self {
            n_rows,
            cols,
            cost,
            rhs,
            slack_of_row,
            row_flip,
            cost_offset,
            var_map,
        }
    }

    fn recover(&self, s: &[f64]) -> Vec<f64> {
        self.var_map
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, lo } => lo + s[col],
                VarMap::Mirrored { col, hi } => hi - s[col],
                VarMap::Split { pos, neg } => s[pos] - s[neg],
            })
            .collect()
    }
}

/// Solves `lp` with the dense revised simplex. Infeasibility and
/// unboundedness are reported through the status.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let sf = StandardForm::build(lp);
    let n = lp.n_vars();
    let out = simplex::solve(&sf);
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    Ok(match out.status {
        LpStatus::Optimal => {
            let x = sf.recover(&out.x);
            LpSolution {
                status: LpStatus::Optimal,
                objective_value: lp.evaluate(&x),
                x,
                dual_objective: Some(sign * (out.dual_value + sf.cost_offset)),
                dual_infeasibility: out.dual_infeasibility,
                row_duals: sf.row_flip.iter().zip(&out.row_duals).map(|(f, y)| sign * f * y).collect(),
                iterations: out.iterations,
            }
        }
        status => LpSolution::failed(status, n, out.iterations),
    })
}

/// Solves `lp` through its dual, which is cheaper for dense simplex when
/// there are many more rows than variables. Every variable must have bounds
/// [0, ∞). The primal solution is read off the dual's row multipliers.
pub fn solve_lp_dual(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    if lp.bounds.iter().any(|&(lo, hi)| lo != 0.0 || hi != f64::INFINITY) {
        return invalid("dual solve needs every variable bounded by [0, ∞)");
    }
    let n = lp.n_vars();
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    // primal: min c'ᵀx (c' = sign·c), rows aᵣᵀx ~ bᵣ, x ≥ 0
    // dual:   max bᵀy, Aᵀy ≤ c', y ≥ 0 on ≥ rows, y ≤ 0 on ≤ rows
    let rhs: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
    let mut dual = LinearProgram::new(Sense::Maximize, rhs);
    for (r, c) in lp.constraints.iter().enumerate() {
        dual.bounds[r] = match c.relation {
            Relation::Ge => (0.0, f64::INFINITY),
            Relation::Le => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (f64::NEG_INFINITY, f64::INFINITY),
        };
    }
    for j in 0..n {
        let col = lp.constraints.iter().map(|c| c.coeffs[j]).collect();
        dual.add(col, Relation::Le, sign * lp.objective[j]);
    }
    let sol = solve_lp(&dual)?;
    match sol.status {
        LpStatus::Optimal => {
            let x: Vec<f64> = sol.row_duals.iter().map(|v| v.max(0.0)).collect();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value: lp.evaluate(&x),
                dual_objective: Some(lp.offset + sign * sol.objective_value),
                dual_infeasibility: dual.max_violation(&sol.x),
                row_duals: sol.x.iter().map(|y| sign * y).collect(),
                x,
                iterations: sol.iterations,
            })
        }
        LpStatus::Unbounded => Ok(LpSolution::failed(LpStatus::Infeasible, n, sol.iterations)),
        LpStatus::Infeasible => {
            // primal is infeasible or unbounded; a feasibility solve tells which
            let mut probe = lp.clone();
            probe.objective = vec![0.0; n];
            let feasible = solve_lp(&probe)?.is_optimal();
            let status = if feasible { LpStatus::Unbounded } else { LpStatus::Infeasible };
            Ok(LpSolution::failed(status, n, sol.iterations))
        }
        LpStatus::IterationLimit => Ok(LpSolution::failed(LpStatus::IterationLimit, n, sol.iterations)),
    }
}

/// Solves `base` plus `lazy` rows by row generation: only rows violated by
/// the current optimum are added, until none is. The result is optimal for
/// the full program.
pub fn solve_lp_lazy(base: &LinearProgram, lazy: &[Constraint]) -> Result<LpSolution> {
    const BATCH: usize = 128;
    let mut lp = base.clone();
    let mut active = vec![false; lazy.len()];
    let mut iterations = 0;
    loop {
        lp.validate()?;
        let mut sol = solve_lp(&lp)?;
        iterations += sol.iterations;
        sol.iterations = iterations;
        if !sol.is_optimal() {
            // an unbounded relaxation may still be bounded once every row is present
            if sol.status == LpStatus::Unbounded && active.iter().any(|a| !a) {
                for (k, c) in lazy.iter().enumerate() {
                    if !active[k] {
                        active[k] = true;
                        lp.constraints.push(c.clone());
                    }
                }
                continue;
            }
            return Ok(sol);
        }
        let mut violated: Vec<(usize, f64)> = lazy
            .iter()
            .enumerate()
            .filter(|(k, _)| !active[*k])
            .map(|(k, c)| (k, c.violation(&sol.x)))
            .filter(|&(_, v)| v > 1e-10)
            .collect();
        if violated.is_empty() {
            return Ok(sol);
        }
        violated.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(k, _) in violated.iter().take(BATCH) {
            active[k] = true;
            lp.constraints.push(lazy[k].clone());
        }
    }
}
