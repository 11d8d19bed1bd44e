//! Feature maps Φ(x, y) = e_y ⊗ ψ(x).
//!
//! The Fourier kind uses ψ(x) = √(2/D)·[cos(ω₁ᵀx), sin(ω₁ᵀx), …, cos(ω_Dᵀx),
//! sin(ω_Dᵀx)] with ω ~ N(0, σ²I). Frequencies are drawn as σ·Ω_std with
//! Ω_std ~ N(0, I) from a fixed seed, so changing σ rescales the same draw.
//! The polynomial kind uses every monomial of total degree ≤ k.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{invalid, Result};

/// Default number of random frequencies.
pub const DEFAULT_FREQUENCIES: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapKind {
    Fourier { n_freq: usize, sigma: f64, seed: u64 },
    Polynomial { degree: usize },
}

/// Serializable description of a map; frequencies are regenerated from
/// the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDescriptor {
    pub dim: usize,
    pub n_classes: usize,
    #[serde(flatten)]
    pub kind: MapKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap {
    descriptor: MapDescriptor,
    /// D×d frequencies (Fourier kind).
    omega: Option<Array2<f64>>,
    /// Exponent vectors (polynomial kind).
    monomials: Vec<Vec<u32>>,
}

impl SpectralMap {
    /// Samples a random Fourier map.
    pub fn fourier(dim: usize, n_freq: usize, sigma: f64, n_classes: usize, seed: u64) -> Result<Self> {
        if n_freq == 0 {
            return invalid("number of frequencies must be positive");
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        if dim == 0 || n_classes == 0 {
            return invalid("feature dimension and class count must be positive");
        }
        let mut omega = standard_frequencies(n_freq, dim, seed);
        omega.mapv_inplace(|w| sigma * w);
        Ok(Self {
            descriptor: MapDescriptor {
                dim,
                n_classes,
                kind: MapKind::Fourier { n_freq, sigma, seed },
            },
            omega: Some(omega),
            monomials: Vec::new(),
        })
    }

    /// Deterministic polynomial map with all monomials of total degree ≤
    /// `degree`, constant first, then by increasing degree.
    pub fn polynomial(dim: usize, degree: usize, n_classes: usize) -> Result<Self> {
        if degree == 0 {
            return invalid("polynomial degree must be at least 1");
        }
        if dim == 0 || n_classes == 0 {
            return invalid("feature dimension and class count must be positive");
        }
        let mut monomials = Vec::new();
        for total in 0..=degree as u32 {
            let mut current = vec![0u32; dim];
            push_compositions(total, 0, &mut current, &mut monomials);
        }
        Ok(Self {
            descriptor: MapDescriptor {
                dim,
                n_classes,
                kind: MapKind::Polynomial { degree },
            },
            omega: None,
            monomials,
        })
    }

    pub fn from_descriptor(d: &MapDescriptor) -> Result<Self> {
        match d.kind {
            MapKind::Fourier { n_freq, sigma, seed } => Self::fourier(d.dim, n_freq, sigma, d.n_classes, seed),
            MapKind::Polynomial { degree } => Self::polynomial(d.dim, degree, d.n_classes),
        }
    }

    pub fn descriptor(&self) -> &MapDescriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.descriptor.dim
    }

    pub fn n_classes(&self) -> usize {
        self.descriptor.n_classes
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.descriptor.kind {
            MapKind::Fourier { sigma, .. } => Some(sigma),
            MapKind::Polynomial { .. } => None,
        }
    }

    pub fn omega(&self) -> Option<&Array2<f64>> {
        self.omega.as_ref()
    }

    /// Length of the per-label block ψ(x).
    pub fn block_len(&self) -> usize {
        match &self.omega {
            Some(o) => 2 * o.nrows(),
            None => self.monomials.len(),
        }
    }

    /// Output dimension m = |Y| · block length.
    pub fn output_dim(&self) -> usize {
        self.n_classes() * self.block_len()
    }

    /// Same map with a different σ (Fourier only), reusing the seed.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        match self.descriptor.kind {
            MapKind::Fourier { n_freq, seed, .. } => Self::fourier(self.dim(), n_freq, sigma, self.n_classes(), seed),
            MapKind::Polynomial { .. } => invalid("polynomial maps have no sigma"),
        }
    }

    /// Same map keeping only the first `n_freq` frequencies (Fourier only).
    /// Because frequencies are drawn row by row, this equals a freshly
    /// sampled map with `n_freq` frequencies and the same seed.
    pub fn with_frequencies(&self, n_freq: usize) -> Result<Self> {
        match self.descriptor.kind {
            MapKind::Fourier { sigma, seed, .. } => Self::fourier(self.dim(), n_freq, sigma, self.n_classes(), seed),
            MapKind::Polynomial { .. } => invalid("polynomial maps have no frequencies"),
        }
    }

    /// Label-independent block ψ(x).
    pub fn block(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return invalid(format!("expected {} features, got {}", self.dim(), x.len()));
        }
        let mut out = Array1::zeros(self.block_len());
        match &self.omega {
            Some(omega) => {
                let scale = (2.0 / omega.nrows() as f64).sqrt();
                for (k, w) in omega.axis_iter(Axis(0)).enumerate() {
                    let t = w.dot(&x);
                    out[2 * k] = scale * t.cos();
                    out[2 * k + 1] = scale * t.sin();
                }
            }
            None => {
                for (k, exps) in self.monomials.iter().enumerate() {
                    out[k] = exps.iter().zip(x.iter()).map(|(&e, v)| v.powi(e as i32)).product();
                }
            }
        }
        Ok(out)
    }

    /// Blocks for every row of `x` (N×block_len).
    pub fn block_matrix(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return invalid(format!("expected {} features, got {}", self.dim(), x.ncols()));
        }
        match &self.omega {
            Some(omega) => {
                let proj = x.dot(&omega.t());
                let scale = (2.0 / omega.nrows() as f64).sqrt();
                let mut out = Array2::zeros((x.nrows(), 2 * omega.nrows()));
                for ((i, k), &t) in proj.indexed_iter() {
                    out[[i, 2 * k]] = scale * t.cos();
                    out[[i, 2 * k + 1]] = scale * t.sin();
                }
                Ok(out)
            }
            None => {
                let mut out = Array2::zeros((x.nrows(), self.block_len()));
                for (i, row) in x.axis_iter(Axis(0)).enumerate() {
                    out.row_mut(i).assign(&self.block(row)?);
                }
                Ok(out)
            }
        }
    }

    /// Φ(x, y).
    pub fn apply(&self, x: ArrayView1<f64>, y: usize) -> Result<Array1<f64>> {
        if y >= self.n_classes() {
            return invalid(format!("label {y} out of range for {} classes", self.n_classes()));
        }
        let block = self.block(x)?;
        let k = block.len();
        let mut out = Array1::zeros(self.output_dim());
        out.slice_mut(ndarray::s![y * k..(y + 1) * k]).assign(&block);
        Ok(out)
    }

    /// Rows Φ(xᵢ, yᵢ) for a whole dataset (N×m).
    pub fn apply_batch(&self, ds: &Dataset) -> Result<Array2<f64>> {
        let blocks = self.block_matrix(ds.features())?;
        embed_blocks(&blocks, ds.labels(), self.n_classes())
    }
}

/// Places each block row into its label's slot of an N×(|Y|·k) matrix.
pub fn embed_blocks(blocks: &Array2<f64>, labels: &[usize], n_classes: usize) -> Result<Array2<f64>> {
    if blocks.nrows() != labels.len() {
        return invalid("block rows and labels differ in length");
    }
    let k = blocks.ncols();
    let mut out = Array2::zeros((blocks.nrows(), n_classes * k));
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return invalid(format!("label {y} out of range"));
        }
        out.slice_mut(ndarray::s![i, y * k..(y + 1) * k]).assign(&blocks.row(i));
    }
    Ok(out)
}

/// Standard-normal frequency draw, row-major, so the first D′ rows of a
/// D-row draw equal a D′-row draw under the same seed.
fn standard_frequencies(n_freq: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n_freq, dim), || rng.sample::<f64, _>(StandardNormal))
}

fn push_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// σ_scale = √(2 / (d · v̄)) with d the number of input features and v̄ the
/// mean of their per-column population variances. This is the σ whose
/// Gaussian kernel exp(−σ²‖x−x′‖²/2) has the usual `1/(d·var X)` width.
pub fn sigma_scale(train: &Dataset) -> Result<f64> {
    let x = train.features();
    let n = x.nrows() as f64;
    let mean_var = x
        .axis_iter(Axis(1))
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
        })
        .sum::<f64>()
        / x.ncols() as f64;
    if !(mean_var > 0.0) {
        return invalid("sigma scale needs positive feature variance");
    }
    Ok((2.0 / (x.ncols() as f64 * mean_var)).sqrt())
}

/// `n_points` log-spaced values from 0.1·σ_scale to 10·σ_scale inclusive.
pub fn sigma_grid(train: &Dataset, n_points: usize) -> Result<Vec<f64>> {
    if n_points < 2 {
        return invalid("sigma grid needs at least two points");
    }
    let scale = sigma_scale(train)?;
    Ok(log_space(0.1 * scale, 10.0 * scale, n_points))
}

/// Geometric grid with exact endpoints.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_toy, standardize};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn frequency_moments() {
        let m = SpectralMap::fourier(2, 1000, 1.0, 2, 3).unwrap();
        let o = m.omega().unwrap();
        let n = o.len() as f64;
        let mean = o.sum() / n;
        let var = o.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.1 && (var - 1.0).abs() < 0.1, "{mean} {var}");
    }

    #[test]
    fn scale_coupled_and_deterministic() {
        let a = SpectralMap::fourier(2, 50, 1.0, 2, 9).unwrap();
        let b = SpectralMap::fourier(2, 50, 2.0, 2, 9).unwrap();
        assert_eq!(b.omega().unwrap(), &(a.omega().unwrap() * 2.0));
        let c = SpectralMap::fourier(2, 1, 1.0, 2, 5).unwrap();
        let d = SpectralMap::fourier(2, 1, 1.0, 2, 5).unwrap();
        assert_eq!(c, d);
        // prefix property used for reduced maps
        let e = SpectralMap::fourier(2, 10, 1.0, 2, 9).unwrap();
        assert_eq!(e.omega().unwrap().row(3), a.omega().unwrap().row(3));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SpectralMap::fourier(2, 0, 1.0, 2, 0).is_err());
        assert!(SpectralMap::fourier(2, 5, 0.0, 2, 0).is_err());
        assert!(SpectralMap::fourier(2, 5, -1.0, 2, 0).is_err());
        assert!(SpectralMap::polynomial(2, 0, 2).is_err());
    }

    #[test]
    fn apply_at_origin() {
        let m = SpectralMap::fourier(3, 4, 1.3, 2, 1).unwrap();
        let phi = m.apply(array![0.0, 0.0, 0.0].view(), 1).unwrap();
        let s = (2.0f64 / 4.0).sqrt();
        assert_eq!(phi.len(), 16);
        assert!(phi.slice(ndarray::s![..8]).iter().all(|&v| v == 0.0));
        let expected = [s, 0.0, s, 0.0, s, 0.0, s, 0.0];
        for (a, b) in phi.slice(ndarray::s![8..]).iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn apply_norm_and_kronecker_structure() {
        let m = SpectralMap::fourier(2, 17, 0.7, 3, 2).unwrap();
        let x = array![0.3, -1.9];
        let p0 = m.apply(x.view(), 0).unwrap();
        let p2 = m.apply(x.view(), 2).unwrap();
        assert_abs_diff_eq!(p0.dot(&p0), 2.0, epsilon = 1e-12);
        let k = m.block_len();
        assert_eq!(p0.slice(ndarray::s![..k]), p2.slice(ndarray::s![2 * k..]));
        assert_eq!(p0.iter().filter(|v| **v != 0.0).count() <= k, true);
        assert!(m.apply(x.view(), 3).is_err());
        assert!(m.apply(array![1.0].view(), 0).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let ds = standardize(&generate_toy(30, 4).unwrap());
        let m = SpectralMap::fourier(2, 8, 1.0, 2, 4).unwrap();
        let batch = m.apply_batch(&ds).unwrap();
        for i in 0..ds.len() {
            let single = m.apply(ds.features().row(i), ds.labels()[i]).unwrap();
            for (a, b) in batch.row(i).iter().zip(single.iter()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            let y = ds.labels()[i];
            let k = m.block_len();
            for (j, v) in batch.row(i).iter().enumerate() {
                if j / k != y {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn polynomial_blocks() {
        let m = SpectralMap::polynomial(1, 2, 2).unwrap();
        assert_eq!(m.block(array![3.0].view()).unwrap().to_vec(), vec![1.0, 3.0, 9.0]);
        let m = SpectralMap::polynomial(2, 1, 2).unwrap();
        assert_eq!(m.block(array![2.0, 5.0].view()).unwrap().to_vec(), vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn polynomial_monomial_count_matches_enumeration() {
        // brute force: exponent pairs (a, b) with a + b <= 9
        let brute = (0..=9).flat_map(|a| (0..=9).map(move |b| (a, b))).filter(|(a, b)| a + b <= 9).count();
        assert_eq!(brute, 55);
        assert_eq!(SpectralMap::polynomial(2, 9, 2).unwrap().block_len(), brute);
    }

    #[test]
    fn sigma_grid_shape() {
        let ds = standardize(&generate_toy(300, 1).unwrap());
        let scale = sigma_scale(&ds).unwrap();
        assert_abs_diff_eq!(scale, 1.0, epsilon = 1e-9);
        let g2 = sigma_grid(&ds, 2).unwrap();
        assert_eq!(g2, vec![0.1 * scale, 10.0 * scale]);
        let g3 = sigma_grid(&ds, 3).unwrap();
        assert_abs_diff_eq!(g3[1], scale, epsilon = 1e-12);
        let g10 = sigma_grid(&ds, 10).unwrap();
        assert!(g10.windows(2).all(|w| w[0] > 0.0 && w[1] > w[0]));
        assert!(sigma_grid(&ds, 1).is_err());
        let flat = Dataset::new(array![[1.0], [1.0]], vec![0, 1], 2, None).unwrap();
        assert!(sigma_grid(&flat, 3).is_err());
    }

    #[test]
    fn descriptor_roundtrip() {
        let m = SpectralMap::fourier(2, 6, 0.4, 2, 77).unwrap();
        let json = serde_json::to_string(m.descriptor()).unwrap();
        let back = SpectralMap::from_descriptor(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
