//! Extreme Value Machine baseline.
//!
//! Each training point gets a Weibull model of its margin: half the
//! distances to its `k` nearest points of other classes, with the upper
//! endpoint of the negated margin fixed at zero. A query is known when it is
//! likely enough to fall inside at least one point's margin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::OpenSetClassifier;
use crate::data::{DistanceMetric, Evidence, Label, LabeledDataset, Verdict};
use crate::error::{Error, Result};
use crate::evt::{weibull_mle, ReversedWeibull};
use crate::neighbors::NeighborIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvmConfig {
    pub k: usize,
    pub metric: DistanceMetric,
    /// Probability threshold. There is no default; without it only `psi` is
    /// available.
    pub delta: Option<f64>,
}

impl Default for EvmConfig {
    fn default() -> Self {
        EvmConfig {
            k: 20,
            metric: DistanceMetric::Euclidean,
            delta: None,
        }
    }
}

/// Fitted margin distribution of one training point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginModel {
    pub sigma: f64,
    pub alpha: f64,
}

impl MarginModel {
    pub fn distribution(&self) -> ReversedWeibull {
        ReversedWeibull {
            sigma: self.sigma,
            alpha: self.alpha,
            endpoint: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvmModel {
    data: LabeledDataset,
    metric: DistanceMetric,
    k: usize,
    delta: Option<f64>,
    margins: Vec<MarginModel>,
}

impl EvmModel {
    pub fn fit(data: &LabeledDataset, config: &EvmConfig) -> Result<Self> {
        config.metric.validate()?;
        if data.num_classes() < 2 {
            return Err(Error::Unsupported(
                "the EVM needs at least two known classes; single-class training data cannot \
                 define margins"
                    .into(),
            ));
        }
        if let Some(d) = config.delta {
            check_delta(d)?;
        }
        let k = config.k;
        if k < 3 {
            return Err(Error::usage(format!("EVM tail size k must be >= 3, got {k}")));
        }
        // Index over the complement of each class.
        let others: Vec<(Vec<usize>, NeighborIndex)> = (0..data.num_classes())
            .map(|c| {
                let ids: Vec<usize> = (0..data.len()).filter(|&j| data.label(j) != c).collect();
                let index =
                    NeighborIndex::new(ids.iter().map(|&j| data.point(j)), data.dim(), config.metric)?;
                Ok((ids, index))
            })
            .collect::<Result<_>>()?;
        for c in 0..data.num_classes() {
            let available = others[c].0.len();
            if k > available {
                return Err(Error::usage(format!(
                    "k = {k} exceeds the {available} points outside class '{}'",
                    data.class_name(c)
                )));
            }
        }
        let margins = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let (_, index) = &others[data.label(i)];
                let nn = index.k_smallest_distances(data.point(i), k)?;
                let half: Vec<f64> = nn.iter().map(|n| n.distance / 2.0).collect();
                let fit = weibull_mle(&half).map_err(|e| Error::Fit {
                    message: format!("margin fit for training point {i} failed: {e}"),
                    diagnostics: match e {
                        Error::Fit { diagnostics, .. } => diagnostics,
                        _ => None,
                    },
                })?;
                Ok(MarginModel {
                    sigma: fit.sigma,
                    alpha: fit.alpha,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvmModel {
            data: data.clone(),
            metric: config.metric,
            k,
            delta: config.delta,
            margins,
        })
    }

    pub fn from_parts(
        data: LabeledDataset,
        metric: DistanceMetric,
        k: usize,
        delta: Option<f64>,
        margins: Vec<MarginModel>,
    ) -> Result<Self> {
        if margins.len() != data.len() {
            return Err(Error::Model(format!(
                "{} margin models for {} training points",
                margins.len(),
                data.len()
            )));
        }
        if let Some(d) = delta {
            check_delta(d)?;
        }
        Ok(EvmModel {
            data,
            metric,
            k,
            delta,
            margins,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn set_delta(&mut self, delta: Option<f64>) -> Result<()> {
        if let Some(d) = delta {
            check_delta(d)?;
        }
        self.delta = delta;
        Ok(())
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn margins(&self) -> &[MarginModel] {
        &self.margins
    }

    /// `max_i W_i(-||x0 - x_i||)`, the probability of the best-matching margin.
    pub fn psi(&self, x0: &[f64]) -> Result<f64> {
        self.check_dim(x0)?;
        Ok(self
            .data
            .points()
            .zip(&self.margins)
            .map(|(x, m)| m.distribution().cdf(-self.metric.eval(x0, x)))
            .fold(0.0, f64::max))
    }

    /// `-ln psi`, computed without forming `psi`, so it stays finite and
    /// strictly ordered far from the data where `psi` underflows to zero.
    pub fn neg_log_psi(&self, x0: &[f64]) -> Result<f64> {
        self.check_dim(x0)?;
        Ok(self
            .data
            .points()
            .zip(&self.margins)
            .map(|(x, m)| (self.metric.eval(x0, x) / m.sigma).powf(m.alpha))
            .fold(f64::INFINITY, f64::min))
    }

    fn check_dim(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.data.dim() {
            return Err(Error::usage(format!(
                "dimension mismatch: query has {} coordinates, model has {}",
                x0.len(),
                self.data.dim()
            )));
        }
        Ok(())
    }

    /// Verdict at the configured `delta`. `Verdict::score` is `1 - psi`.
    pub fn score(&self, x0: &[f64]) -> Result<(Verdict, f64)> {
        let delta = self
            .delta
            .ok_or_else(|| Error::usage("EVM decisions need an explicit delta"))?;
        let psi = self.psi(x0)?;
        Ok((
            Verdict {
                label: if psi >= delta { Label::Known } else { Label::Unknown },
                score: 1.0 - psi,
                evidence: Evidence::Evm { psi },
            },
            psi,
        ))
    }
}

fn check_delta(d: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::usage(format!("delta must lie in [0, 1], got {d}")));
    }
    Ok(())
}

impl OpenSetClassifier for EvmModel {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn classify(&self, x: &[f64]) -> Result<Verdict> {
        self.score(x).map(|(v, _)| v)
    }
}
