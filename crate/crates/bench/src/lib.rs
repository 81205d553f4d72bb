//! Fixtures shared by the benchmarks.

use openevt::rng::substream;
use openevt::LabeledDataset;
use rand::Rng;

/// `n` points uniform in the unit cube of dimension `dim`, one class.
pub fn uniform_cloud(n: usize, dim: usize, seed: u64) -> LabeledDataset {
    let mut rng = substream(seed, "bench-cloud", 0);
    let pts = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    LabeledDataset::single_class(pts, "known").expect("nonempty cloud")
}

/// `classes` unit cubes side by side along the first axis, `n_per` points each.
pub fn labelled_cubes(classes: usize, n_per: usize, dim: usize, seed: u64) -> LabeledDataset {
    let mut rng = substream(seed, "bench-cubes", 0);
    let mut pts = Vec::with_capacity(classes * n_per);
    let mut labels = Vec::with_capacity(classes * n_per);
    for c in 0..classes {
        for _ in 0..n_per {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            x[0] += 1.5 * c as f64;
            pts.push(x);
            labels.push(format!("c{c}"));
        }
    }
    LabeledDataset::new(pts, &labels).expect("consistent fixture")
}

/// Query points uniform in `[-0.5, 1.5]^dim`, so some fall outside the data.
pub fn queries(m: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, "bench-queries", 0);
    (0..m).map(|_| (0..dim).map(|_| rng.random_range(-0.5..1.5)).collect()).collect()
}
