use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectre::dataset::{generate_toy, standardize};
use spectre::spectral::SpectralMap;

#[test]
fn fourier_blocks_approximate_gaussian_kernel() {
    let ds = standardize(&generate_toy(500, 11).unwrap());
    let x = ds.features();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n_freq = 2000;
    for sigma in [0.5, 1.0, 2.0] {
        let map = SpectralMap::fourier(2, n_freq, sigma, 2, 5).unwrap();
        let blocks = map.block_matrix(x).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let i = rng.random_range(0..x.nrows());
            let j = rng.random_range(0..x.nrows());
            // ⟨ψ(x), ψ(x′)⟩ is twice the mean of cos(ωᵀ(x − x′)) over frequencies
            let estimate = blocks.row(i).dot(&blocks.row(j)) / 2.0;
            let dist2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
            let kernel = (-sigma * sigma * dist2 / 2.0).exp();
            worst = worst.max((estimate - kernel).abs());
        }
        assert!(worst < 0.05, "sigma {sigma}: worst deviation {worst}");
    }
}
