//! Exact LP form of the 0-1 loss MRC dual objective, used as an oracle for
//! the subgradient solver on small problems.

use ndarray::Array2;

use super::{LinearProgram, Relation, Sense};
use crate::error::{invalid, Result};

/// Largest feature-map dimension accepted by [`mrc_lp_reformulation`].
pub const MAX_REFORMULATION_DIM: usize = 200;
/// Largest number of epigraph rows accepted.
pub const MAX_REFORMULATION_ROWS: usize = 20_000;

/// Builds `min λᵀ(μ⁺+μ⁻) − τᵀ(μ⁺−μ⁻) + 1 + ν` subject to
/// `ν ≥ (Σ_{y∈C} Φ(xᵢ,y)ᵀ(μ⁺−μ⁻) − 1)/|C|` for every row i and non-empty
/// label subset C, with μ± ≥ 0 and ν free. Variables are ordered
/// `[μ⁺ (m), μ⁻ (m), ν]`.
///
/// `phi` holds rows Φ(xᵢ, yᵢ); the label-free block of xᵢ is read from the
/// slot of its own label.
pub fn mrc_lp_reformulation(
    phi: &Array2<f64>,
    tau: &[f64],
    lambda: &[f64],
    labels: &[usize],
    n_classes: usize,
) -> Result<LinearProgram> {
    let (n, m) = phi.dim();
    if tau.len() != m || lambda.len() != m || labels.len() != n {
        return invalid("phi, tau, lambda and labels disagree in size");
    }
    if n_classes == 0 || m % n_classes != 0 {
        return invalid("feature dimension is not a multiple of the class count");
    }
    if n_classes > 16 {
        return invalid("label subsets are enumerated; at most 16 classes supported");
    }
    let n_subsets = (1usize << n_classes) - 1;
    if m > MAX_REFORMULATION_DIM || n * n_subsets > MAX_REFORMULATION_ROWS {
        return invalid(format!(
            "LP reformulation refused: m = {m}, rows = {} exceed the oracle size guard",
            n * n_subsets
        ));
    }
    let k = m / n_classes;
    let nv = 2 * m + 1;
    let mut objective = vec![0.0; nv];
    for j in 0..m {
        objective[j] = lambda[j] - tau[j];
        objective[m + j] = lambda[j] + tau[j];
    }
    objective[2 * m] = 1.0;
    let mut lp = LinearProgram::new(Sense::Minimize, objective);
    lp.offset = 1.0;
    lp.set_bounds(2 * m, f64::NEG_INFINITY, f64::INFINITY);

    for (i, &yi) in labels.iter().enumerate() {
        if yi >= n_classes {
            return invalid(format!("label {yi} out of range"));
        }
        let block: Vec<f64> = (0..k).map(|j| phi[[i, yi * k + j]]).collect();
        for subset in 1..=n_subsets {
            let size = subset.count_ones() as f64;
            let mut row = vec![0.0; nv];
            for y in (0..n_classes).filter(|y| subset & (1 << y) != 0) {
                for (j, b) in block.iter().enumerate() {
                    row[y * k + j] = -b / size;
                    row[m + y * k + j] = b / size;
                }
            }
            row[2 * m] = 1.0;
            lp.add(row, Relation::Ge, -1.0 / size);
        }
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve_lp;
    use ndarray::array;

    #[test]
    fn sizes() {
        let phi = array![[1.0, 0.0], [0.0, 0.5]];
        let lp = mrc_lp_reformulation(&phi, &[0.5, 0.25], &[0.1, 0.1], &[0, 1], 2).unwrap();
        assert_eq!(lp.n_vars(), 5);
        assert_eq!(lp.constraints.len(), 6);
    }

    #[test]
    fn zero_lambda_drops_abs_term() {
        let phi = array![[1.0, 0.0], [0.0, 0.5]];
        let tau = [0.5, 0.25];
        let lp = mrc_lp_reformulation(&phi, &tau, &[0.0, 0.0], &[0, 1], 2).unwrap();
        // μ⁺ and μ⁻ coefficients are exactly ∓τ, i.e. only −τᵀμ remains
        assert_eq!(&lp.objective[..2], &[-0.5, -0.25]);
        assert_eq!(&lp.objective[2..4], &[0.5, 0.25]);
    }

    #[test]
    fn optimum_not_above_origin_value() {
        let phi = array![[0.3, -0.2, 0.0, 0.0], [0.0, 0.0, 0.9, 0.1], [0.5, 0.5, 0.0, 0.0]];
        let tau: Vec<f64> = (0..4).map(|j| phi.column(j).sum() / 3.0).collect();
        let lp = mrc_lp_reformulation(&phi, &tau, &[0.05; 4], &[0, 1, 0], 2).unwrap();
        let s = solve_lp(&lp).unwrap();
        assert!(s.is_optimal());
        assert!(s.objective_value <= 0.5 + 1e-12);
    }

    #[test]
    fn size_guard() {
        let phi = Array2::zeros((2, 402));
        let err = mrc_lp_reformulation(&phi, &[0.0; 402], &[0.0; 402], &[0, 1], 2).unwrap_err();
        assert!(err.to_string().contains("refused"));
    }
}
