//! 0-1 loss minimax risk classifier over a feature-map uncertainty set.
//!
//! The uncertainty set holds every distribution whose feature-map
//! expectation lies within ±λ of the empirical mean τ, with
//! λ = λ₀·√(var(Φ)/N). Training minimizes the dual objective
//!
//! ```text
//! F(μ) = λᵀ|μ| − τᵀμ + 1 + maxᵢ φ(μ, xᵢ),
//! φ(μ, x) = max_{∅≠C⊆Y} (Σ_{y∈C} Φ(x,y)ᵀμ − 1) / |C|
//! ```
//!
//! whose optimal value is the minimax (worst-case) 0-1 risk.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::lp::{minimize_nonsmooth, Method, NonsmoothObjective, SolverConfig, StopReason};
use crate::spectral::{embed_blocks, MapDescriptor, SpectralMap};

/// Moment band around the empirical feature-map mean.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet {
    pub tau: Vec<f64>,
    pub lambda: Vec<f64>,
    pub lambda0: f64,
    /// Rows Φ(xᵢ, yᵢ) the moments were computed from.
    pub phi_matrix: Array2<f64>,
    pub n: usize,
}

impl UncertaintySet {
    /// Same τ with the band rescaled to a different λ₀.
    pub fn with_lambda0(&self, lambda0: f64) -> Result<Self> {
        if !(lambda0 >= 0.0) {
            return invalid(format!("lambda0 must be non-negative, got {lambda0}"));
        }
        let scale = if self.lambda0 > 0.0 {
            None
        } else {
            Some(column_stderr(&self.phi_matrix))
        };
        let lambda = match scale {
            Some(se) => se.iter().map(|s| lambda0 * s).collect(),
            None => self.lambda.iter().map(|l| l / self.lambda0 * lambda0).collect(),
        };
        Ok(Self {
            lambda,
            lambda0,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    /// Largest violation of `|Σᵢ pᵢ rowsᵢ − τ| ⪯ λ`.
    pub fn band_violation(&self, rows: &Array2<f64>, weights: &[f64]) -> f64 {
        let w = ArrayView1::from(weights);
        let mean = rows.t().dot(&w);
        mean.iter()
            .zip(self.tau.iter().zip(&self.lambda))
            .map(|(m, (t, l))| ((m - t).abs() - l).max(0.0))
            .fold(0.0, f64::max)
    }
}

fn column_stderr(phi: &Array2<f64>) -> Vec<f64> {
    let n = phi.nrows() as f64;
    phi.axis_iter(Axis(1))
        .map(|c| {
            let m = c.sum() / n;
            let var = (c.iter().map(|v| v * v).sum::<f64>() / n - m * m).max(0.0);
            (var / n).sqrt()
        })
        .collect()
}

/// τ = column mean of `phi`, λ = λ₀·√(population column variance / N).
pub fn build_uncertainty(phi: Array2<f64>, lambda0: f64) -> Result<UncertaintySet> {
    let n = phi.nrows();
    if n < 2 {
        return invalid("uncertainty set needs at least two instances");
    }
    if !(lambda0 >= 0.0) || !lambda0.is_finite() {
        return invalid(format!("lambda0 must be non-negative, got {lambda0}"));
    }
    let tau: Vec<f64> = phi.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let lambda = column_stderr(&phi).into_iter().map(|s| lambda0 * s).collect();
    Ok(UncertaintySet {
        tau,
        lambda,
        lambda0,
        phi_matrix: phi,
        n,
    })
}

/// φ(μ, x) given the per-label scores Φ(x,y)ᵀμ. Returns the value and the
/// maximizing label subset (smallest size among ties; within a size the
/// highest scores, lower labels first).
pub fn subset_max(scores: &[f64]) -> (f64, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut best = f64::NEG_INFINITY;
    let mut best_size = 0;
    let mut prefix = 0.0;
    for (k, &y) in order.iter().enumerate() {
        prefix += scores[y];
        let v = (prefix - 1.0) / (k + 1) as f64;
        if v > best {
            best = v;
            best_size = k + 1;
        }
    }
    order.truncate(best_size);
    order.sort_unstable();
    (best, order)
}

/// The MRC dual objective F(μ) over precomputed feature blocks.
pub struct MrcObjective<'a> {
    blocks: ArrayView2<'a, f64>,
    tau: &'a [f64],
    lambda: &'a [f64],
    n_classes: usize,
}

impl<'a> MrcObjective<'a> {
    pub fn new(blocks: ArrayView2<'a, f64>, tau: &'a [f64], lambda: &'a [f64], n_classes: usize) -> Self {
        assert_eq!(blocks.ncols() * n_classes, tau.len());
        assert_eq!(tau.len(), lambda.len());
        Self {
            blocks,
            tau,
            lambda,
            n_classes,
        }
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        let mut g = vec![0.0; mu.len()];
        self.evaluate(mu, &mut g)
    }
}

impl NonsmoothObjective for MrcObjective<'_> {
    fn dim(&self) -> usize {
        self.tau.len()
    }

    fn evaluate(&self, mu: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.blocks.ncols();
        let mut worst = f64::NEG_INFINITY;
        let mut worst_row = 0;
        let mut worst_set = Vec::new();
        let mut scores = vec![0.0; self.n_classes];
        for (i, row) in self.blocks.axis_iter(Axis(0)).enumerate() {
            let row = row.to_slice().expect("row-major blocks");
            for (y, s) in scores.iter_mut().enumerate() {
                *s = dot(row, &mu[y * k..(y + 1) * k]);
            }
            let (v, set) = subset_max(&scores);
            if v > worst {
                worst = v;
                worst_row = i;
                worst_set = set;
            }
        }
        let mut value = 1.0 + worst;
        for j in 0..mu.len() {
            let sign = if mu[j] > 0.0 {
                1.0
            } else if mu[j] < 0.0 {
                -1.0
            } else {
                0.0
            };
            value += self.lambda[j] * mu[j].abs() - self.tau[j] * mu[j];
            grad[j] = self.lambda[j] * sign - self.tau[j];
        }
        let share = 1.0 / worst_set.len() as f64;
        let block = self.blocks.row(worst_row);
        for &y in &worst_set {
            for (g, b) in grad[y * k..(y + 1) * k].iter_mut().zip(block.iter()) {
                *g += share * b;
            }
        }
        value
    }
}

/// Dot product with four running sums so the loop vectorizes; the
/// summation order is fixed, keeping results reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub iterations: usize,
    pub final_step: f64,
    pub step_constant: f64,
    pub stop_reason: StopReason,
}

/// A trained classifier: coefficients μ* together with its feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRecord", try_from = "ModelRecord")]
pub struct MrcModel {
    pub mu: Vec<f64>,
    pub map: SpectralMap,
    pub lambda0: f64,
    /// Converged value of F, the minimax 0-1 risk over the uncertainty set.
    pub worst_case_risk: f64,
    pub objective_trace: Vec<f64>,
    pub solver_meta: SolverMeta,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    map: MapDescriptor,
    lambda0: f64,
    worst_case_risk: f64,
    solver_meta: SolverMeta,
    mu: Vec<f64>,
}

impl From<MrcModel> for ModelRecord {
    fn from(m: MrcModel) -> Self {
        Self {
            map: *m.map.descriptor(),
            lambda0: m.lambda0,
            worst_case_risk: m.worst_case_risk,
            solver_meta: m.solver_meta,
            mu: m.mu,
        }
    }
}

impl TryFrom<ModelRecord> for MrcModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let map = SpectralMap::from_descriptor(&r.map)?;
        if r.mu.len() != map.output_dim() {
            return invalid(format!(
                "model has {} coefficients, map expects {}",
                r.mu.len(),
                map.output_dim()
            ));
        }
        Ok(Self {
            mu: r.mu,
            map,
            lambda0: r.lambda0,
            worst_case_risk: r.worst_case_risk,
            objective_trace: Vec::new(),
            solver_meta: r.solver_meta,
        })
    }
}

/// Trains on `train` with the given map and confidence λ₀.
pub fn train(train: &Dataset, map: &SpectralMap, lambda0: f64, cfg: &SolverConfig) -> Result<MrcModel> {
    check_compatible(train, map)?;
    let blocks = map.block_matrix(train.features())?;
    train_on_blocks(&blocks, train.labels(), map, lambda0, cfg)
}

/// Training entry point for callers that reuse the feature blocks of one
/// map across several λ₀ values.
pub fn train_on_blocks(
    blocks: &Array2<f64>,
    labels: &[usize],
    map: &SpectralMap,
    lambda0: f64,
    cfg: &SolverConfig,
) -> Result<MrcModel> {
    cfg.validate()?;
    let n_classes = map.n_classes();
    let mut present = vec![false; n_classes];
    for &y in labels {
        if y >= n_classes {
            return invalid(format!("label {y} out of range for the map"));
        }
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return invalid("training data must contain at least two classes");
    }
    let phi = embed_blocks(blocks, labels, n_classes)?;
    let set = build_uncertainty(phi, lambda0)?;
    let objective = MrcObjective::new(blocks.view(), &set.tau, &set.lambda, n_classes);
    let tau_norm = set.tau.iter().map(|t| t * t).sum::<f64>().sqrt();
    let step_constant = cfg.step_constant.unwrap_or(match cfg.method {
        Method::Bundle => 1.0,
        Method::Subgradient => 0.1 / (1.0 + tau_norm),
    });
    let solver_cfg = SolverConfig {
        step_constant: Some(step_constant),
        ..cfg.clone()
    };
    let result = minimize_nonsmooth(&objective, &vec![0.0; set.dim()], &solver_cfg);
    if result.stop_reason == StopReason::MaxIterations {
        return Err(Error::NotConverged {
            iterations: result.iterations,
            best: result.value,
            trace_tail: result.trace.iter().rev().take(10).rev().copied().collect(),
        });
    }
    Ok(MrcModel {
        mu: result.x,
        map: map.clone(),
        lambda0,
        worst_case_risk: result.value,
        objective_trace: result.trace,
        solver_meta: SolverMeta {
            iterations: result.iterations,
            final_step: result.final_step,
            step_constant,
            stop_reason: result.stop_reason,
        },
    })
}

fn check_compatible(ds: &Dataset, map: &SpectralMap) -> Result<()> {
    if ds.dim() != map.dim() {
        return invalid(format!("map expects {} features, data has {}", map.dim(), ds.dim()));
    }
    if ds.n_classes() > map.n_classes() {
        return invalid("data has more classes than the map");
    }
    Ok(())
}

impl MrcModel {
    pub fn n_classes(&self) -> usize {
        self.map.n_classes()
    }

    /// Scores Φ(x,y)ᵀμ for each label.
    pub fn scores(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        let block = self.map.block(x)?;
        let k = block.len();
        Ok((0..self.n_classes())
            .map(|y| block.iter().zip(&self.mu[y * k..(y + 1) * k]).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Score matrix (N×|Y|) for many rows at once.
    pub fn score_matrix(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let blocks = self.map.block_matrix(x)?;
        let w = ArrayView2::from_shape((self.n_classes(), blocks.ncols()), &self.mu[..])
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(blocks.dot(&w.t()))
    }

    /// argmax_y Φ(x,y)ᵀμ*, ties toward the smallest label.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        let s = self.score_matrix(x)?;
        Ok(s.axis_iter(Axis(0))
            .map(|r| argmax(r.as_slice().expect("row-major")))
            .collect())
    }

    /// h(y|x) ∝ (Φ(x,y)ᵀμ* − φ(μ*, x))₊, uniform when every part is zero.
    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Result<Vec<f64>> {
        Ok(proba_from_scores(&self.scores(x)?))
    }

    pub fn predict_proba_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let s = self.score_matrix(x)?;
        let mut out = Array2::zeros(s.dim());
        for (i, r) in s.axis_iter(Axis(0)).enumerate() {
            let p = proba_from_scores(r.as_slice().expect("row-major"));
            out.row_mut(i).assign(&ArrayView1::from(&p[..]));
        }
        Ok(out)
    }

    /// Value of the training objective at this model's μ on `train`.
    pub fn objective_on(&self, train: &Dataset) -> Result<f64> {
        check_compatible(train, &self.map)?;
        let blocks = self.map.block_matrix(train.features())?;
        let phi = embed_blocks(&blocks, train.labels(), self.n_classes())?;
        let set = build_uncertainty(phi, self.lambda0)?;
        Ok(MrcObjective::new(blocks.view(), &set.tau, &set.lambda, self.n_classes()).value(&self.mu))
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (y, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = y;
        }
    }
    best
}

fn proba_from_scores(scores: &[f64]) -> Vec<f64> {
    let (phi, _) = subset_max(scores);
    let parts: Vec<f64> = scores.iter().map(|s| (s - phi).max(0.0)).collect();
    let total: f64 = parts.iter().sum();
    if total > 0.0 {
        parts.iter().map(|p| p / total).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, standardize};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    /// φ by enumerating every non-empty subset.
    fn subset_max_brute(scores: &[f64]) -> f64 {
        let n = scores.len();
        (1..(1usize << n))
            .map(|s| {
                let members: Vec<usize> = (0..n).filter(|y| s & (1 << y) != 0).collect();
                (members.iter().map(|&y| scores[y]).sum::<f64>() - 1.0) / members.len() as f64
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    proptest! {
        #[test]
        fn subset_max_matches_enumeration(scores in proptest::collection::vec(-3.0f64..3.0, 1..7)) {
            let (v, set) = subset_max(&scores);
            prop_assert!((v - subset_max_brute(&scores)).abs() < 1e-12);
            let direct = (set.iter().map(|&y| scores[y]).sum::<f64>() - 1.0) / set.len() as f64;
            prop_assert!((direct - v).abs() < 1e-12);
        }

        #[test]
        fn proba_is_a_distribution(scores in proptest::collection::vec(-3.0f64..3.0, 2..6)) {
            let p = proba_from_scores(&scores);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn band_formula() {
        let col: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let phi = Array2::from_shape_vec((100, 1), col).unwrap();
        let u = build_uncertainty(phi.clone(), 0.3).unwrap();
        assert_abs_diff_eq!(u.lambda[0], 0.015, epsilon = 1e-12);
        assert_abs_diff_eq!(u.tau[0], 0.5, epsilon = 1e-12);
        let zero = build_uncertainty(phi, 0.0).unwrap();
        assert_eq!(zero.lambda, vec![0.0]);
        let constant = build_uncertainty(Array2::from_elem((10, 1), 0.7), 5.0).unwrap();
        assert_eq!(constant.lambda, vec![0.0]);
        assert!(build_uncertainty(Array2::zeros((1, 3)), 0.3).is_err());
        assert!(build_uncertainty(Array2::zeros((4, 3)), -0.1).is_err());
    }

    #[test]
    fn rescaling_lambda0() {
        let phi = array![[1.0, 0.0], [0.0, 2.0], [3.0, 1.0]];
        let a = build_uncertainty(phi.clone(), 0.5).unwrap();
        let b = build_uncertainty(phi.clone(), 2.0).unwrap();
        let c = a.with_lambda0(2.0).unwrap();
        let d = build_uncertainty(phi, 0.0).unwrap().with_lambda0(2.0).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(b.lambda[j], c.lambda[j], epsilon = 1e-14);
            assert_abs_diff_eq!(b.lambda[j], d.lambda[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn objective_at_origin() {
        let ds = standardize(&generate_toy(40, 1).unwrap());
        for n_classes in [2usize, 3] {
            let map = SpectralMap::fourier(2, 5, 1.0, n_classes, 0).unwrap();
            let blocks = map.block_matrix(ds.features()).unwrap();
            let set = build_uncertainty(embed_blocks(&blocks, ds.labels(), n_classes).unwrap(), 0.3).unwrap();
            let f = MrcObjective::new(blocks.view(), &set.tau, &set.lambda, n_classes);
            assert_abs_diff_eq!(f.value(&vec![0.0; set.dim()]), 1.0 - 1.0 / n_classes as f64, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_model_predicts_first_label_uniformly() {
        let map = SpectralMap::fourier(2, 3, 1.0, 2, 0).unwrap();
        let model = MrcModel {
            mu: vec![0.0; map.output_dim()],
            map,
            lambda0: 0.3,
            worst_case_risk: 0.5,
            objective_trace: vec![],
            solver_meta: SolverMeta {
                iterations: 0,
                final_step: 0.0,
                step_constant: 0.1,
                stop_reason: StopReason::Converged,
            },
        };
        let x = array![0.4, -1.0];
        assert_eq!(model.predict(x.view()).unwrap(), 0);
        assert_eq!(model.predict_proba(x.view()).unwrap(), vec![0.5, 0.5]);
        assert!(model.predict(array![1.0].view()).is_err());
    }

    #[test]
    fn dominant_score_takes_all_mass() {
        assert_eq!(proba_from_scores(&[0.0, 2.0]), vec![0.0, 1.0]);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }

    #[test]
    fn separable_line_is_learned() {
        let x = Array2::from_shape_fn((100, 1), |(i, _)| if i < 50 { -1.0 } else { 1.0 });
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        let ds = Dataset::new(x, labels, 2, None).unwrap();
        let map = SpectralMap::polynomial(1, 1, 2).unwrap();
        let model = train(&ds, &map, 0.01, &SolverConfig::default()).unwrap();
        let pred = model.predict_batch(ds.features()).unwrap();
        assert_eq!(pred, ds.labels());
        assert!(model.worst_case_risk <= 0.1, "{}", model.worst_case_risk);
        assert!(model.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn training_is_deterministic() {
        let ds = standardize(&generate_toy(60, 2).unwrap());
        let map = SpectralMap::fourier(2, 4, 1.0, 2, 3).unwrap();
        let a = train(&ds, &map, 0.3, &SolverConfig::default()).unwrap();
        let b = train(&ds, &map, 0.3, &SolverConfig::default()).unwrap();
        assert_eq!(a.mu, b.mu);
    }

    #[test]
    fn single_class_rejected() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0]], vec![1, 1, 1], 2, None).unwrap();
        let map = SpectralMap::polynomial(1, 1, 2).unwrap();
        assert!(train(&ds, &map, 0.3, &SolverConfig::default()).is_err());
    }

    #[test]
    fn model_json_roundtrip() {
        let ds = standardize(&generate_toy(50, 2).unwrap());
        let map = SpectralMap::fourier(2, 4, 1.0, 2, 3).unwrap();
        let model = train(&ds, &map, 0.3, &SolverConfig::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: MrcModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.mu, model.mu);
        assert_eq!(back.predict_batch(ds.features()).unwrap(), model.predict_batch(ds.features()).unwrap());
    }
}
