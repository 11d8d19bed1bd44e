//! Proximal bundle method for convex, possibly nonsmooth functions.
//!
//! Each iteration minimizes the cutting-plane model of f plus a proximal
//! term `‖x − x̂‖²/(2t)` around the stability center x̂, through the dual
//! QP over the unit simplex of cut weights. A candidate that realizes a
//! fraction of the predicted decrease becomes the new center (serious
//! step); otherwise its cut enriches the model (null step).

use super::nonsmooth::{NonsmoothObjective, NonsmoothResult, SolverConfig, StopReason};

const MAX_CUTS: usize = 60;
const SERIOUS_FRACTION: f64 = 0.1;
const T_MIN: f64 = 1e-8;
const T_MAX: f64 = 1e8;

struct Cut {
    grad: Vec<f64>,
    /// Linearization error at the current center, ≥ 0.
    error: f64,
}

pub(super) fn minimize_bundle(obj: &dyn NonsmoothObjective, x0: &[f64], cfg: &SolverConfig) -> NonsmoothResult {
    let n = obj.dim();
    let mut center = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f_center = obj.evaluate(&center, &mut g);
    let mut trace = vec![f_center];
    if g.iter().all(|&v| v == 0.0) {
        return finish(center, f_center, trace, 0.0, StopReason::Stationary);
    }
    let g_norm = norm(&g);
    let mut t = cfg.step_constant.unwrap_or(1.0) / g_norm.max(1e-12);
    let mut cuts = vec![Cut { grad: g.clone(), error: 0.0 }];
    // Gram matrix of cut gradients, kept in sync with `cuts`.
    let mut gram = vec![vec![dot(&g, &g)]];
    let mut candidate = vec![0.0; n];
    let mut agg = vec![0.0; n];
    let mut stop = StopReason::MaxIterations;
    let mut last_improvement = 0usize;
    let mut stall_ref = f_center;
    let mut alpha = vec![1.0];

    while trace.len() < cfg.max_iters {
        let errors: Vec<f64> = cuts.iter().map(|c| c.error).collect();
        alpha.resize(cuts.len(), 0.0);
        alpha = simplex_qp(&gram, &errors, t, Some(&alpha));
        agg.iter_mut().for_each(|v| *v = 0.0);
        for (a, c) in alpha.iter().zip(&cuts) {
            if *a > 0.0 {
                for (s, gi) in agg.iter_mut().zip(&c.grad) {
                    *s += a * gi;
                }
            }
        }
        let agg_sq = dot(&agg, &agg);
        let agg_err: f64 = alpha.iter().zip(&errors).map(|(a, e)| a * e).sum();
        let predicted = t * agg_sq + agg_err;
        if predicted <= cfg.tolerance * (1.0 + f_center.abs()) {
            stop = StopReason::Converged;
            break;
        }
        for ((c, x), a) in candidate.iter_mut().zip(&center).zip(&agg) {
            *c = x - t * a;
        }
        let f_cand = obj.evaluate(&candidate, &mut g);

        // keep cuts carrying weight, fold the rest into one aggregate cut
        if cuts.len() >= MAX_CUTS {
            let keep: Vec<usize> = (0..cuts.len()).filter(|&k| alpha[k] > 1e-12).collect();
            let mut kept: Vec<Cut> = Vec::with_capacity(keep.len() + 2);
            if keep.len() + 2 > MAX_CUTS {
                kept.push(Cut { grad: agg.clone(), error: agg_err });
                alpha = vec![1.0];
            } else {
                for &k in &keep {
                    kept.push(Cut { grad: std::mem::take(&mut cuts[k].grad), error: cuts[k].error });
                }
                kept.push(Cut { grad: agg.clone(), error: agg_err });
                alpha = keep.iter().map(|&k| alpha[k]).chain([0.0]).collect();
            }
            cuts = kept;
            gram = build_gram(&cuts);
        }

        let decrease = f_center - f_cand;
        if decrease >= SERIOUS_FRACTION * predicted {
            // move the center: errors shift by the change in linearizations
            let step: Vec<f64> = candidate.iter().zip(&center).map(|(a, b)| a - b).collect();
            for c in cuts.iter_mut() {
                c.error = (c.error + f_cand - f_center - dot(&c.grad, &step)).max(0.0);
            }
            center.copy_from_slice(&candidate);
            f_center = f_cand;
            if decrease >= 0.5 * predicted {
                t = (t * 2.0).min(T_MAX);
            }
            push_cut(&mut cuts, &mut gram, g.clone(), 0.0);
        } else {
            let lin_at_center = f_cand + dot(&g, &center.iter().zip(&candidate).map(|(a, b)| a - b).collect::<Vec<_>>());
            let error = (f_center - lin_at_center).max(0.0);
            if error > predicted {
                t = (t * 0.5).max(T_MIN);
            }
            push_cut(&mut cuts, &mut gram, g.clone(), error);
        }
        trace.push(f_center);

        if stall_ref - f_center >= cfg.tolerance {
            stall_ref = f_center;
            last_improvement = trace.len();
        } else if trace.len() - last_improvement >= cfg.patience * 10 {
            stop = StopReason::Converged;
            break;
        }
    }
    finish(center, f_center, trace, t, stop)
}

fn finish(x: Vec<f64>, value: f64, trace: Vec<f64>, t: f64, stop_reason: StopReason) -> NonsmoothResult {
    NonsmoothResult {
        iterations: trace.len(),
        x,
        value,
        trace,
        final_step: t,
        stop_reason,
    }
}

fn push_cut(cuts: &mut Vec<Cut>, gram: &mut Vec<Vec<f64>>, grad: Vec<f64>, error: f64) {
    let row: Vec<f64> = cuts.iter().map(|c| dot(&c.grad, &grad)).collect();
    for (r, v) in gram.iter_mut().zip(&row) {
        r.push(*v);
    }
    let mut last = row;
    last.push(dot(&grad, &grad));
    gram.push(last);
    cuts.push(Cut { grad, error });
}

fn build_gram(cuts: &[Cut]) -> Vec<Vec<f64>> {
    let k = cuts.len();
    let mut gram = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a..k {
            let v = dot(&cuts[a].grad, &cuts[b].grad);
            gram[a][b] = v;
            gram[b][a] = v;
        }
    }
    gram
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `(t/2)·αᵀGα + eᵀα` over the unit simplex with a primal
/// active-set method, optionally warm-started from a feasible `start`
/// whose support becomes the initial free set. A tiny ridge keeps the
/// reduced systems regular when cut gradients are linearly dependent.
pub(crate) fn simplex_qp(gram: &[Vec<f64>], errors: &[f64], t: f64, start: Option<&[f64]>) -> Vec<f64> {
    let k = errors.len();
    let trace: f64 = (0..k).map(|i| gram[i][i]).sum::<f64>() / k as f64;
    let ridge = 1e-12 * trace.max(1e-300);
    let q = |i: usize, j: usize| t * gram[i][j] + if i == j { t * ridge } else { 0.0 };
    let objective_gradient = |alpha: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| errors[i] + (0..k).map(|j| q(i, j) * alpha[j]).sum::<f64>())
            .collect()
    };

    let mut alpha = vec![0.0; k];
    let mut free = vec![false; k];
    match start.filter(|s| s.len() == k && s.iter().any(|&a| a > 0.0)) {
        Some(s) => {
            let total: f64 = s.iter().filter(|&&a| a > 0.0).sum();
            for i in 0..k {
                if s[i] > 0.0 {
                    alpha[i] = s[i] / total;
                    free[i] = true;
                }
            }
        }
        None => {
            let vertex = (0..k)
                .min_by(|&a, &b| (errors[a] + 0.5 * q(a, a)).total_cmp(&(errors[b] + 0.5 * q(b, b))))
                .expect("at least one cut");
            alpha[vertex] = 1.0;
            free[vertex] = true;
        }
    }

    for _ in 0..(10 * k + 50) {
        let idx: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
        let target = solve_reduced(&idx, &q, errors);
        // move toward the reduced optimum, stopping at the first blocking bound
        let mut step = 1.0;
        let mut blocking = None;
        for (p, &i) in idx.iter().enumerate() {
            let d = target[p] - alpha[i];
            if d < 0.0 && target[p] < 0.0 {
                let s = alpha[i] / -d;
                if s < step {
                    step = s;
                    blocking = Some(i);
                }
            }
        }
        for (p, &i) in idx.iter().enumerate() {
            alpha[i] += step * (target[p] - alpha[i]);
        }
        if let Some(b) = blocking {
            alpha[b] = 0.0;
            free[b] = false;
            let total: f64 = alpha.iter().sum();
            alpha.iter_mut().for_each(|a| *a /= total);
            continue;
        }
        let grad = objective_gradient(&alpha);
        let level = idx.iter().map(|&i| grad[i]).sum::<f64>() / idx.len() as f64;
        let entering = (0..k)
            .filter(|&i| !free[i])
            .min_by(|&a, &b| grad[a].total_cmp(&grad[b]))
            .filter(|&i| grad[i] < level - 1e-14 * (1.0 + level.abs()));
        match entering {
            Some(i) => free[i] = true,
            None => break,
        }
    }
    alpha
}

/// Minimizer of the QP restricted to `idx` with only Σα = 1 imposed.
fn solve_reduced(idx: &[usize], q: &dyn Fn(usize, usize) -> f64, errors: &[f64]) -> Vec<f64> {
    let s = idx.len();
    // KKT system [Q 1; 1ᵀ 0][α; ν] = [−e; 1]
    let dim = s + 1;
    let mut a = vec![vec![0.0; dim + 1]; dim];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            a[r][c] = q(i, j);
        }
        a[r][s] = 1.0;
        a[r][dim] = -errors[i];
        a[s][r] = 1.0;
    }
    a[s][dim] = 1.0;
    gauss_solve(&mut a);
    (0..s).map(|r| a[r][dim]).collect()
}

/// In-place Gaussian elimination with partial pivoting on an augmented
/// matrix; the solution ends up in the last column.
fn gauss_solve(a: &mut [Vec<f64>]) {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty");
        a.swap(col, piv);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for c in col..=n {
            a[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp_value(gram: &[Vec<f64>], e: &[f64], t: f64, a: &[f64]) -> f64 {
        let k = a.len();
        let quad: f64 = (0..k).map(|i| (0..k).map(|j| a[i] * gram[i][j] * a[j]).sum::<f64>()).sum();
        0.5 * t * quad + a.iter().zip(e).map(|(x, y)| x * y).sum::<f64>()
    }

    #[test]
    fn qp_two_opposite_cuts() {
        // g1 = 1, g2 = −1: the minimum-norm combination is zero
        let gram = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let a = simplex_qp(&gram, &[0.0, 0.0], 1.0, None);
        assert!((a[0] - 0.5).abs() < 1e-9 && (a[1] - 0.5).abs() < 1e-9, "{a:?}");
    }

    #[test]
    fn qp_beats_grid_search() {
        let g: Vec<Vec<f64>> = vec![vec![1.0, 0.2], vec![-0.5, 1.0], vec![0.1, -1.2], vec![0.9, 0.9]];
        let gram: Vec<Vec<f64>> = g.iter().map(|a| g.iter().map(|b| dot(a, b)).collect()).collect();
        let e = [0.3, 0.0, 0.1, 0.5];
        let a = simplex_qp(&gram, &e, 0.7, None);
        let warm = simplex_qp(&gram, &e, 0.7, Some(&[0.25, 0.25, 0.25, 0.25]));
        assert!((qp_value(&gram, &e, 0.7, &warm) - qp_value(&gram, &e, 0.7, &a)).abs() < 1e-12);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12 && a.iter().all(|&v| v >= 0.0));
        let best = qp_value(&gram, &e, 0.7, &a);
        let steps = 40;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                for k in 0..=(steps - i - j) {
                    let l = steps - i - j - k;
                    let w = [i, j, k, l].map(|v| v as f64 / steps as f64);
                    assert!(best <= qp_value(&gram, &e, 0.7, &w) + 1e-12);
                }
            }
        }
    }
}
