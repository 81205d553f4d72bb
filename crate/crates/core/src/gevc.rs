//! GEV classifier.
//!
//! Every training point contributes its distance to the nearest other
//! training point. A reversed Weibull fitted to the negated values models the
//! nearest-neighbour distance of a known point; a query whose own
//! nearest-training distance falls in the lower `alpha` tail is rejected.

use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::classifier::OpenSetClassifier;
use crate::data::{DistanceMetric, Evidence, Label, LabeledDataset, Verdict};
use crate::error::{Error, Result};
use crate::evt::{reversed_weibull_fit, reversed_weibull_fit_free_endpoint, ReversedWeibull};
use crate::neighbors::NeighborIndex;

/// Fraction of changed nearest distances that triggers a refit on the next
/// score after an update.
pub const LAZY_REFIT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointMode {
    /// Upper endpoint fixed at zero.
    #[default]
    Zero,
    /// Upper endpoint estimated with the other parameters.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevcConfig {
    pub alpha: f64,
    pub metric: DistanceMetric,
    pub endpoint: EndpointMode,
}

impl Default for GevcConfig {
    fn default() -> Self {
        GevcConfig {
            alpha: 0.05,
            metric: DistanceMetric::Euclidean,
            endpoint: EndpointMode::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FitState {
    fitted: ReversedWeibull,
    /// Nearest-distance entries changed since `fitted` was computed.
    changed_since_fit: usize,
    stale: bool,
}

#[derive(Debug)]
pub struct GevcModel {
    data: LabeledDataset,
    index: NeighborIndex,
    alpha: f64,
    endpoint: EndpointMode,
    state: RwLock<FitState>,
}

impl Clone for GevcModel {
    fn clone(&self) -> Self {
        GevcModel {
            data: self.data.clone(),
            index: self.index.clone(),
            alpha: self.alpha,
            endpoint: self.endpoint,
            state: RwLock::new(*self.state.read().expect("fit state lock poisoned")),
        }
    }
}

/// Negated positive nearest distances; zeros (duplicates) are left out.
fn fit_sample(dmin: &[f64]) -> Vec<f64> {
    dmin.iter().filter(|d| **d > 0.0).map(|d| -d).collect()
}

fn fit_dmin(dmin: &[f64], mode: EndpointMode) -> Result<ReversedWeibull> {
    let sample = fit_sample(dmin);
    if sample.len() < 3 {
        return Err(Error::fit(format!(
            "need at least 3 strictly positive nearest distances, got {}",
            sample.len()
        )));
    }
    match mode {
        EndpointMode::Zero => reversed_weibull_fit(&sample, 0.0),
        EndpointMode::Estimated => reversed_weibull_fit_free_endpoint(&sample),
    }
}

impl GevcModel {
    pub fn fit(data: &LabeledDataset, config: &GevcConfig) -> Result<Self> {
        if data.len() < 3 {
            return Err(Error::usage(format!("GEVC needs n >= 3, got {}", data.len())));
        }
        if !(0.0..=1.0).contains(&config.alpha) {
            return Err(Error::usage(format!("alpha must lie in [0, 1], got {}", config.alpha)));
        }
        let mut index = NeighborIndex::from_dataset(data, config.metric)?;
        index.track_nearest()?;
        let dmin = index.nearest_distances().expect("tracking enabled");
        let fitted = fit_dmin(&dmin, config.endpoint)?;
        index.reset_stats();
        Ok(GevcModel {
            data: data.clone(),
            index,
            alpha: config.alpha,
            endpoint: config.endpoint,
            state: RwLock::new(FitState {
                fitted,
                changed_since_fit: 0,
                stale: false,
            }),
        })
    }

    /// Rebuilds a model around an already fitted distribution (used by the
    /// model file reader).
    pub fn from_parts(
        data: LabeledDataset,
        metric: DistanceMetric,
        alpha: f64,
        endpoint: EndpointMode,
        fitted: ReversedWeibull,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Model(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let mut index = NeighborIndex::from_dataset(&data, metric)?;
        index.track_nearest()?;
        index.reset_stats();
        Ok(GevcModel {
            data,
            index,
            alpha,
            endpoint,
            state: RwLock::new(FitState {
                fitted,
                changed_since_fit: 0,
                stale: false,
            }),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::usage(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let mut m = self.clone();
        m.alpha = alpha;
        Ok(m)
    }

    pub fn endpoint_mode(&self) -> EndpointMode {
        self.endpoint
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn metric(&self) -> DistanceMetric {
        self.index.metric()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Nearest-other-point distance of every training point.
    pub fn dmin(&self) -> Vec<f64> {
        self.index.nearest_distances().expect("tracking enabled")
    }

    /// Number of training points excluded from the fit as exact duplicates.
    pub fn excluded_duplicates(&self) -> usize {
        self.dmin().iter().filter(|d| **d == 0.0).count()
    }

    /// Currently fitted distribution, which may lag behind recent updates
    /// until the next refit.
    pub fn fitted(&self) -> ReversedWeibull {
        self.state.read().expect("fit state lock poisoned").fitted
    }

    pub fn is_stale(&self) -> bool {
        self.state.read().expect("fit state lock poisoned").stale
    }

    /// Refits now if any update happened since the last fit.
    pub fn refresh(&self) -> Result<ReversedWeibull> {
        self.refit_if(|_| true)
    }

    fn refit_if(&self, cond: impl Fn(&FitState) -> bool) -> Result<ReversedWeibull> {
        {
            let st = self.state.read().expect("fit state lock poisoned");
            if !st.stale || !cond(&st) {
                return Ok(st.fitted);
            }
        }
        let mut st = self.state.write().expect("fit state lock poisoned");
        // Another scorer may have refitted while we waited for the lock.
        if st.stale && cond(&st) {
            st.fitted = fit_dmin(&self.dmin(), self.endpoint)?;
            st.stale = false;
            st.changed_since_fit = 0;
        }
        Ok(st.fitted)
    }

    fn lazy_refit(&self) -> Result<ReversedWeibull> {
        let n = self.data.len() as f64;
        self.refit_if(|st| st.changed_since_fit as f64 > LAZY_REFIT_FRACTION * n)
    }

    /// Returns the verdict and the query's nearest training distance.
    /// `Verdict::score` is `1 - W(-d0)`.
    pub fn score(&self, x0: &[f64]) -> Result<(Verdict, f64)> {
        let fitted = self.lazy_refit()?;
        let d0 = self.index.k_smallest_distances(x0, 1)?[0].distance;
        let w = fitted.cdf(-d0);
        let verdict = Verdict {
            label: if w < self.alpha { Label::Unknown } else { Label::Known },
            score: 1.0 - w,
            evidence: Evidence::Gevc { d0_min: d0 },
        };
        Ok((verdict, d0))
    }

    /// Adds labelled points. Nearest distances of existing points are revised
    /// from the insertion change sets; the distribution is refitted lazily.
    pub fn update(&mut self, new_points: &[(Vec<f64>, String)]) -> Result<()> {
        if new_points.is_empty() {
            return Ok(());
        }
        for (x, _) in new_points {
            if x.len() != self.data.dim() {
                return Err(Error::usage(format!(
                    "dimension mismatch: point has {} coordinates, model has {}",
                    x.len(),
                    self.data.dim()
                )));
            }
        }
        let mut changed = 0;
        for (x, label) in new_points {
            changed += self.index.insert(x)?.len() + 1;
            self.data.push(x, label)?;
        }
        let st = self.state.get_mut().expect("fit state lock poisoned");
        st.changed_since_fit += changed;
        st.stale = true;
        Ok(())
    }
}

impl OpenSetClassifier for GevcModel {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn classify(&self, x: &[f64]) -> Result<Verdict> {
        self.score(x).map(|(v, _)| v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn gaussian(seed: u64, n: usize) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        LabeledDataset::single_class(pts, "k").unwrap()
    }

    #[test]
    fn lattice_is_degenerate() {
        let pts = (0..100).map(|i| vec![(i % 10) as f64, (i / 10) as f64]).collect();
        let data = LabeledDataset::single_class(pts, "k").unwrap();
        let err = GevcModel::fit(&data, &GevcConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Fit { .. }), "{err}");
    }

    #[test]
    fn fitted_median_matches_empirical() {
        // Uniform density makes nearest-neighbor distances close to Weibull
        // with shape 2 away from the border.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = (0..5000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let data = LabeledDataset::single_class(pts, "k").unwrap();
        let model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        assert!((model.fitted().alpha - 2.0).abs() < 0.2);
        let mut neg: Vec<f64> = model.dmin().iter().map(|d| -d).collect();
        neg.sort_by(f64::total_cmp);
        let emp = 0.5 * (neg[2499] + neg[2500]);
        let fit = model.fitted().median();
        assert!((fit / emp - 1.0).abs() < 0.05, "{fit} vs {emp}");
        assert_eq!(model.fitted().endpoint, 0.0);
    }

    #[test]
    fn coincident_and_far_queries() {
        let data = gaussian(2, 500);
        let model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        let (v, d0) = model.score(data.point(3)).unwrap();
        assert_eq!(d0, 0.0);
        assert_eq!(v.label, Label::Known);
        assert_eq!(v.score, 0.0);

        let max_dmin = model.dmin().into_iter().fold(0.0, f64::max);
        // Shift far enough that the nearest training distance is 10x every D^min.
        let x = [10.0 * max_dmin + 10.0, 0.0];
        let (v, d0) = model.score(&x).unwrap();
        assert!(d0 > 10.0 * max_dmin);
        assert_eq!(v.label, Label::Unknown);
        assert!(model.fitted().cdf(-d0) < 1e-12);

        let lax = model.with_alpha(0.0).unwrap();
        assert_eq!(lax.score(&x).unwrap().0.label, Label::Known);
    }

    #[test]
    fn score_is_monotone_in_distance() {
        let data = gaussian(3, 300);
        let model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        let mut last = (0.0, 0.0);
        for i in 0..200 {
            let x = [i as f64 * 0.03, 4.0];
            let (v, d0) = model.score(&x).unwrap();
            if d0 > last.0 {
                assert!(v.score >= last.1);
            }
            last = (d0, v.score);
        }
    }

    #[test]
    fn empty_update_is_noop() {
        let data = gaussian(4, 100);
        let mut model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        let before = model.fitted();
        model.update(&[]).unwrap();
        assert!(!model.is_stale());
        assert_eq!(model.fitted(), before);
    }

    #[test]
    fn duplicate_insert_excluded_from_fit() {
        let data = gaussian(5, 200);
        let mut model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        let dup = data.point(1).to_vec();
        model.update(&[(dup, "k".into())]).unwrap();
        assert_eq!(model.dmin()[1], 0.0);
        assert_eq!(model.dmin()[200], 0.0);
        assert_eq!(model.excluded_duplicates(), 2);
        let refreshed = model.refresh().unwrap();
        let sample: Vec<f64> = model.dmin().into_iter().filter(|d| *d > 0.0).map(|d| -d).collect();
        assert_eq!(sample.len(), 199);
        assert_eq!(refreshed, reversed_weibull_fit(&sample, 0.0).unwrap());
    }

    #[test]
    fn insert_into_dense_cluster_lowers_dmin() {
        let data = gaussian(6, 400);
        let mut model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        let mut sorted = model.dmin();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[200];
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let jitter = Normal::new(0.0, 1e-3 * median).unwrap();
        let x = vec![data.point(0)[0] + jitter.sample(&mut rng), data.point(0)[1]];
        model.update(&[(x, "k".into())]).unwrap();
        assert!(model.dmin()[400] < median);
    }

    #[test]
    fn lazy_refit_threshold() {
        let data = gaussian(7, 2000);
        let mut model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        let before = model.fitted();
        // A single far point changes only its own entry: below 1% of n.
        model.update(&[(vec![100.0, 100.0], "k".into())]).unwrap();
        model.score(&[0.0, 0.0]).unwrap();
        assert!(model.is_stale());
        assert_eq!(model.fitted(), before);
        let far: Vec<(Vec<f64>, String)> = (0..30).map(|i| (vec![200.0 + i as f64, 0.0], "k".into())).collect();
        model.update(&far).unwrap();
        model.score(&[0.0, 0.0]).unwrap();
        assert!(!model.is_stale());
    }

    #[test]
    fn estimated_endpoint_mode_runs() {
        let data = gaussian(8, 1000);
        let cfg = GevcConfig {
            endpoint: EndpointMode::Estimated,
            ..Default::default()
        };
        let model = GevcModel::fit(&data, &cfg).unwrap();
        assert!(model.fitted().endpoint >= -model.dmin().iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn score_issues_single_nn_query() {
        let data = gaussian(9, 300);
        let model = GevcModel::fit(&data, &GevcConfig::default()).unwrap();
        model.index().reset_stats();
        model.score(&[0.1, 0.2]).unwrap();
        let s = model.index().stats();
        assert_eq!((s.knn_queries, s.neighbors_returned), (1, 1));
    }
}
