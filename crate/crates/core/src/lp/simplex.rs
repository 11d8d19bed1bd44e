//! Dense revised simplex on `min cᵀs, A s = b, s ≥ 0` (b ≥ 0).
//!
//! The basis inverse is kept explicitly (column-major) and updated by
//! elementary row operations, with periodic reinversion. Phase I minimizes
//! the sum of artificial variables; Phase II the true cost. Pricing is
//! Dantzig's rule with a lexicographic ratio test.

use super::{LpStatus, StandardForm, FEASIBILITY_TOL, PIVOT_TOL};

const OPTIMALITY_TOL: f64 = 1e-9;
const REINVERT_EVERY: usize = 64;
const RATIO_TIE_TOL: f64 = 1e-12;

pub(crate) struct CoreOutcome {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub dual_value: f64,
    pub dual_infeasibility: f64,
    /// Simplex multipliers of the standard-form rows.
    pub row_duals: Vec<f64>,
    pub iterations: usize,
}

struct Tableau<'a> {
    sf: &'a StandardForm,
    /// Structural columns followed by artificial ones.
    n_cols: usize,
    n_struct: usize,
    artificial_row: Vec<usize>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Column-major R×R inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

impl<'a> Tableau<'a> {
    fn new(sf: &'a StandardForm) -> Self {
        let r = sf.n_rows;
        let n_struct = sf.cols.len();
        let mut basis = Vec::with_capacity(r);
        let mut artificial_row = Vec::new();
        for row in 0..r {
            match sf.slack_of_row[row] {
                Some(col) => basis.push(col),
                None => {
                    basis.push(n_struct + artificial_row.len());
                    artificial_row.push(row);
                }
            }
        }
        let n_cols = n_struct + artificial_row.len();
        let mut is_basic = vec![false; n_cols];
        for &b in &basis {
            is_basic[b] = true;
        }
        let mut binv = vec![0.0; r * r];
        for i in 0..r {
            binv[i * r + i] = 1.0;
        }
        Self {
            sf,
            n_cols,
            n_struct,
            artificial_row,
            basis,
            is_basic,
            binv,
            xb: sf.rhs.clone(),
            iterations: 0,
        }
    }

    fn rows(&self) -> usize {
        self.sf.n_rows
    }

    fn column(&self, j: usize) -> ColumnRef<'_> {
        if j < self.n_struct {
            ColumnRef::Sparse(&self.sf.cols[j])
        } else {
            ColumnRef::Unit(self.artificial_row[j - self.n_struct])
        }
    }

    /// B⁻¹ a_j.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let r = self.rows();
        let mut u = vec![0.0; r];
        let mut axpy = |k: usize, a: f64| {
            let col = &self.binv[k * r..(k + 1) * r];
            for (ui, bi) in u.iter_mut().zip(col) {
                *ui += a * bi;
            }
        };
        match self.column(j) {
            ColumnRef::Sparse(entries) => {
                for &(k, a) in entries {
                    axpy(k, a);
                }
            }
            ColumnRef::Unit(k) => axpy(k, 1.0),
        }
        u
    }

    /// yᵀ = c_Bᵀ B⁻¹.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let r = self.rows();
        let cb: Vec<f64> = self.basis.iter().map(|&b| cost[b]).collect();
        (0..r)
            .map(|k| {
                self.binv[k * r..(k + 1) * r]
                    .iter()
                    .zip(&cb)
                    .map(|(a, c)| a * c)
                    .sum()
            })
            .collect()
    }

    fn reduced_cost(&self, j: usize, cost: &[f64], y: &[f64]) -> f64 {
        let dot = match self.column(j) {
            ColumnRef::Sparse(entries) => entries.iter().map(|&(k, a)| a * y[k]).sum(),
            ColumnRef::Unit(k) => y[k],
        };
        cost[j] - dot
    }

    fn reinvert(&mut self) -> bool {
        let r = self.rows();
        // dense B, column-major
        let mut b = vec![0.0; r * r];
        for (pos, &j) in self.basis.iter().enumerate() {
            match self.column(j) {
                ColumnRef::Sparse(entries) => {
                    for &(k, a) in entries {
                        b[pos * r + k] = a;
                    }
                }
                ColumnRef::Unit(k) => b[pos * r + k] = 1.0,
            }
        }
        match invert(&b, r) {
            Some(inv) => {
                self.binv = inv;
                self.recompute_xb();
                true
            }
            None => false,
        }
    }

    fn recompute_xb(&mut self) {
        let r = self.rows();
        let mut xb = vec![0.0; r];
        for k in 0..r {
            let bk = self.sf.rhs[k];
            if bk != 0.0 {
                for (x, a) in xb.iter_mut().zip(&self.binv[k * r..(k + 1) * r]) {
                    *x += bk * a;
                }
            }
        }
        self.xb = xb;
    }

    fn pivot(&mut self, leave_pos: usize, enter: usize, u: &[f64]) {
        let r = self.rows();
        let ur = u[leave_pos];
        for col in self.binv.chunks_exact_mut(r) {
            let t = col[leave_pos] / ur;
            if t != 0.0 {
                for (c, ui) in col.iter_mut().zip(u) {
                    *c -= t * ui;
                }
            }
            col[leave_pos] = t;
        }
        let theta = self.xb[leave_pos] / ur;
        for (x, ui) in self.xb.iter_mut().zip(u) {
            *x -= theta * ui;
        }
        self.xb[leave_pos] = theta;
        self.is_basic[self.basis[leave_pos]] = false;
        self.is_basic[enter] = true;
        self.basis[leave_pos] = enter;
        self.iterations += 1;
    }

    /// One pricing + ratio-test round under `cost`, considering entering
    /// columns for which `allowed` holds.
    fn step(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Step {
        let y = self.duals(cost);
        let mut enter = None;
        let mut best = -OPTIMALITY_TOL;
        for j in 0..self.n_cols {
            if self.is_basic[j] || !allowed(j) {
                continue;
            }
            let d = self.reduced_cost(j, cost, &y);
            if d < best {
                enter = Some(j);
                best = d;
            }
        }
        let Some(q) = enter else {
            return Step::Optimal;
        };
        let u = self.ftran(q);
        let Some(l) = self.ratio_test(&u) else {
            return Step::Unbounded;
        };
        self.pivot(l, q, &u);
        // reinversion costs O(R³) against O(R²) per update
        if self.iterations % REINVERT_EVERY.max(self.rows()) == 0 {
            self.reinvert();
        }
        Step::Pivoted
    }

    /// Lexicographic minimum-ratio test: ties in xᵢ/uᵢ are broken by the
    /// rows of B⁻¹ scaled by 1/uᵢ, which rules out cycling on the highly
    /// degenerate bound programs.
    fn ratio_test(&self, u: &[f64]) -> Option<usize> {
        let r = self.rows();
        let mut best: Option<(usize, f64)> = None;
        let mut ties: Vec<usize> = Vec::new();
        for (i, &ui) in u.iter().enumerate() {
            if ui <= PIVOT_TOL {
                continue;
            }
            let ratio = self.xb[i].max(0.0) / ui;
            match best {
                Some((_, b)) if ratio > b + RATIO_TIE_TOL => {}
                Some((_, b)) if ratio >= b - RATIO_TIE_TOL => ties.push(i),
                _ => {
                    best = Some((i, ratio));
                    ties.clear();
                    ties.push(i);
                }
            }
        }
        let (_, ratio) = best?;
        // earlier entries of `ties` may lie above a later, smaller ratio
        ties.retain(|&i| self.xb[i].max(0.0) / u[i] <= ratio + RATIO_TIE_TOL);
        let lex_less = |a: usize, b: usize| {
            for k in 0..r {
                let va = self.binv[k * r + a] / u[a];
                let vb = self.binv[k * r + b] / u[b];
                if va < vb - 1e-12 {
                    return true;
                }
                if va > vb + 1e-12 {
                    return false;
                }
            }
            u[a] > u[b]
        };
        let mut leave = ties[0];
        for &i in &ties[1..] {
            if lex_less(i, leave) {
                leave = i;
            }
        }
        Some(leave)
    }

    fn run(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool, limit: usize) -> Option<LpStatus> {
        loop {
            if self.iterations >= limit {
                return Some(LpStatus::IterationLimit);
            }
            match self.step(cost, allowed) {
                Step::Optimal => return None,
                Step::Unbounded => return Some(LpStatus::Unbounded),
                Step::Pivoted => {}
            }
        }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&b, x)| cost[b] * x).sum()
    }

    /// Pivots zero-level artificials out of the basis where possible.
    fn expel_artificials(&mut self) {
        let r = self.rows();
        for pos in 0..r {
            if self.basis[pos] < self.n_struct {
                continue;
            }
            // row `pos` of B⁻¹A over structural columns
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n_struct {
                if self.is_basic[j] {
                    continue;
                }
                let v: f64 = self.sf.cols[j]
                    .iter()
                    .map(|&(k, a)| a * self.binv[k * r + pos])
                    .sum();
                if v.abs() > 1e-7 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let u = self.ftran(j);
                self.pivot(pos, j, &u);
            }
        }
        self.reinvert();
    }
}

enum ColumnRef<'a> {
    Sparse(&'a [(usize, f64)]),
    Unit(usize),
}

/// Gauss-Jordan inverse with partial pivoting of a column-major matrix.
fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    // work row-major on [A | I]
    let w = 2 * n;
    let mut m = vec![0.0; n * w];
    for i in 0..n {
        for j in 0..n {
            m[i * w + j] = a[j * n + i];
        }
        m[i * w + n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| m[x * w + c].abs().total_cmp(&m[y * w + c].abs()))?;
        if m[p * w + c].abs() < 1e-14 {
            return None;
        }
        if p != c {
            for j in 0..w {
                m.swap(p * w + j, c * w + j);
            }
        }
        let piv = m[c * w + c];
        for j in 0..w {
            m[c * w + j] /= piv;
        }
        let pivot_row: Vec<f64> = m[c * w..(c + 1) * w].to_vec();
        for i in 0..n {
            if i == c {
                continue;
            }
            let f = m[i * w + c];
            if f != 0.0 {
                for (x, pr) in m[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *x -= f * pr;
                }
            }
        }
    }
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            inv[j * n + i] = m[i * w + n + j];
        }
    }
    Some(inv)
}

pub(crate) fn solve(sf: &StandardForm) -> CoreOutcome {
    let mut t = Tableau::new(sf);
    let limit = 50 * (sf.n_rows + sf.cols.len()) + 10_000;
    let n_struct = t.n_struct;

    if !t.artificial_row.is_empty() {
        let mut phase1 = vec![0.0; t.n_cols];
        for c in phase1.iter_mut().skip(n_struct) {
            *c = 1.0;
        }
        if let Some(status) = t.run(&phase1, &|_| true, limit) {
            // Phase I is bounded below by zero, so only the iteration limit applies
            return fail(status, t.iterations);
        }
        t.reinvert();
        let scale = 1.0 + sf.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if t.objective(&phase1) > FEASIBILITY_TOL * scale {
            return fail(LpStatus::Infeasible, t.iterations);
        }
        t.expel_artificials();
    }

    let mut cost = sf.cost.clone();
    cost.resize(t.n_cols, 0.0);
    let structural = |j: usize| j < n_struct;
    if let Some(status) = t.run(&cost, &structural, limit) {
        return fail(status, t.iterations);
    }
    // polish the final basis
    t.reinvert();
    for x in t.xb.iter_mut() {
        if *x < 0.0 && *x > -FEASIBILITY_TOL {
            *x = 0.0;
        }
    }
    let y = t.duals(&cost);
    let dual_value: f64 = y.iter().zip(&sf.rhs).map(|(a, b)| a * b).sum();
    let dual_infeasibility = (0..n_struct)
        .map(|j| -t.reduced_cost(j, &cost, &y))
        .fold(0.0f64, f64::max);
    let mut x = vec![0.0; sf.cols.len()];
    for (&b, &v) in t.basis.iter().zip(&t.xb) {
        if b < n_struct {
            x[b] = v;
        }
    }
    CoreOutcome {
        status: LpStatus::Optimal,
        x,
        dual_value,
        dual_infeasibility,
        row_duals: y,
        iterations: t.iterations,
    }
}

fn fail(status: LpStatus, iterations: usize) -> CoreOutcome {
    CoreOutcome {
        status,
        x: Vec::new(),
        dual_value: f64::NAN,
        dual_infeasibility: f64::NAN,
        row_duals: Vec::new(),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let a = vec![4.0, 2.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 5.0];
        let inv = invert(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| a[k * 3 + i] * inv[j * 3 + k]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(invert(&[1.0, 2.0, 2.0, 4.0], 2).is_none());
    }
}
