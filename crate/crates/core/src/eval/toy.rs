use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::substream;

/// A multivariate normal component with its train and test draw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    /// Row-major covariance, `dim x dim`.
    pub cov: Vec<Vec<f64>>,
    pub train: usize,
    pub test: usize,
}

impl GaussianSpec {
    pub fn isotropic(mean: Vec<f64>, sd: f64, train: usize, test: usize) -> Self {
        let dim = mean.len();
        let cov = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { sd * sd } else { 0.0 }).collect())
            .collect();
        GaussianSpec { mean, cov, train, test }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub known: Vec<(String, GaussianSpec)>,
    /// Only `test` draws are used.
    pub unknown: GaussianSpec,
    pub seed: u64,
}

impl ToyConfig {
    /// Three bivariate known classes and one unknown class, 600 training and
    /// 800 test points. Two known classes sit side by side; the third is
    /// isolated below them and the unknown cluster lies beyond it, well
    /// separated but closest to the isolated class.
    pub fn reference(seed: u64) -> Self {
        let known = [("a", [-2.0, 2.0], 0.5), ("b", [2.0, 2.0], 0.5), ("c", [0.0, -5.0], 0.5)];
        ToyConfig {
            known: known
                .into_iter()
                .map(|(name, m, sd)| (name.to_string(), GaussianSpec::isotropic(m.to_vec(), sd, 200, 200)))
                .collect(),
            unknown: GaussianSpec::isotropic(vec![0.0, -8.0], 0.4, 0, 200),
            seed,
        }
    }

    fn validate(&self) -> Result<usize> {
        if self.known.is_empty() {
            return Err(Error::usage("toy config needs at least one known class"));
        }
        let dim = self.unknown.mean.len();
        if dim == 0 {
            return Err(Error::usage("toy config has zero-dimensional means"));
        }
        for (name, g) in &self.known {
            if g.train == 0 {
                return Err(Error::usage(format!("known class '{name}' has no training draws")));
            }
            if g.mean.len() != dim {
                return Err(Error::usage(format!("class '{name}' mean has the wrong dimension")));
            }
        }
        if self.unknown.test == 0 {
            return Err(Error::usage("unknown class has no test draws"));
        }
        Ok(dim)
    }
}

/// A test draw with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoint {
    pub point: Vec<f64>,
    pub is_known: bool,
}

struct Sampler {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl Sampler {
    fn new(name: &str, g: &GaussianSpec) -> Result<Self> {
        let dim = g.mean.len();
        if g.cov.len() != dim || g.cov.iter().any(|r| r.len() != dim) {
            return Err(Error::usage(format!("covariance of '{name}' is not {dim}x{dim}")));
        }
        let m = DMatrix::from_fn(dim, dim, |i, j| g.cov[i][j]);
        if (0..dim).any(|i| (0..dim).any(|j| m[(i, j)] != m[(j, i)])) {
            return Err(Error::usage(format!("covariance of '{name}' is not symmetric")));
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::usage(format!("covariance of '{name}' is not positive definite")))?;
        Ok(Sampler {
            mean: DVector::from_column_slice(&g.mean),
            chol: chol.l(),
        })
    }

    fn draw(&self, rng: &mut impl Rng) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.chol * z).iter().copied().collect()
    }
}

/// Draws the training set (known classes only) and the test set, with the
/// known test draws in class order followed by the unknown draws.
pub fn generate_toy(cfg: &ToyConfig) -> Result<(LabeledDataset, Vec<TestPoint>)> {
    cfg.validate()?;
    let samplers: Vec<Sampler> = cfg
        .known
        .iter()
        .map(|(name, g)| Sampler::new(name, g))
        .collect::<Result<_>>()?;
    let unknown = Sampler::new("unknown", &cfg.unknown)?;

    let mut rng = substream(cfg.seed, "toy", 0);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut test = Vec::new();
    for ((name, g), s) in cfg.known.iter().zip(&samplers) {
        for _ in 0..g.train {
            points.push(s.draw(&mut rng));
            labels.push(name.clone());
        }
        for _ in 0..g.test {
            test.push(TestPoint { point: s.draw(&mut rng), is_known: true });
        }
    }
    for _ in 0..cfg.unknown.test {
        test.push(TestPoint { point: unknown.draw(&mut rng), is_known: false });
    }
    Ok((LabeledDataset::new(points, &labels)?, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sizes() {
        let (train, test) = generate_toy(&ToyConfig::reference(1)).unwrap();
        assert_eq!(train.len(), 600);
        assert_eq!(train.num_classes(), 3);
        assert_eq!(test.len(), 800);
        assert_eq!(test.iter().filter(|t| !t.is_known).count(), 200);
    }

    #[test]
    fn deterministic() {
        let a = generate_toy(&ToyConfig::reference(9)).unwrap();
        let b = generate_toy(&ToyConfig::reference(9)).unwrap();
        assert_eq!(a, b);
        let c = generate_toy(&ToyConfig::reference(10)).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn rejects_bad_covariance() {
        let mut cfg = ToyConfig::reference(1);
        cfg.known[0].1 = GaussianSpec::isotropic(vec![0.0, 0.0], 0.0, 10, 10);
        assert!(matches!(generate_toy(&cfg), Err(Error::Usage(_))));
        cfg.known[0].1.cov = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(generate_toy(&cfg), Err(Error::Usage(_))));
        cfg.known[0].1.cov = vec![vec![1.0, 0.5], vec![0.0, 1.0]];
        assert!(matches!(generate_toy(&cfg), Err(Error::Usage(_))));
    }

    #[test]
    fn sample_moments() {
        let mut cfg = ToyConfig::reference(3);
        cfg.known = vec![(
            "x".into(),
            GaussianSpec {
                mean: vec![1.0, -1.0],
                cov: vec![vec![2.0, 0.6], vec![0.6, 0.5]],
                train: 20000,
                test: 0,
            },
        )];
        let (train, _) = generate_toy(&cfg).unwrap();
        let n = train.len() as f64;
        let mx = train.points().map(|p| p[0]).sum::<f64>() / n;
        let my = train.points().map(|p| p[1]).sum::<f64>() / n;
        let cxy = train.points().map(|p| (p[0] - mx) * (p[1] - my)).sum::<f64>() / n;
        assert!((mx - 1.0).abs() < 0.05 && (my + 1.0).abs() < 0.03);
        assert!((cxy - 0.6).abs() < 0.05);
    }
}
