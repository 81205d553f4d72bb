//! GPD classifier.
//!
//! A query is scored from its `k + 1` nearest training distances (all known
//! classes pooled). The endpoint-zero shape estimate tests whether the
//! negated distance has upper endpoint zero, and the tail quantile at level
//! `gamma` gives the radius of the ball around the query holding about
//! `gamma` of the training mass. Thresholds on both are calibrated by a
//! leave-one-out pass over the training set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::OpenSetClassifier;
use crate::data::{DistanceMetric, Evidence, Label, LabeledDataset, Verdict};
use crate::error::{Error, Result};
use crate::evt::{default_k, hill_shape_from_nearest, ShapeEstimate};
use crate::neighbors::NeighborIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdcConfig {
    /// Exceedance count; `None` applies [`default_k`].
    pub k: Option<usize>,
    /// Quantile level; `None` means `1/n` for whichever sample size is used.
    pub gamma: Option<f64>,
    /// Target type-I error.
    pub alpha: f64,
    pub metric: DistanceMetric,
}

impl Default for GpdcConfig {
    fn default() -> Self {
        GpdcConfig {
            k: None,
            gamma: None,
            alpha: 0.05,
            metric: DistanceMetric::Euclidean,
        }
    }
}

/// Leave-one-out statistics of one training point. `None` in the profile
/// means the point had an exact duplicate elsewhere in the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JackknifeStat {
    pub p_xi: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    /// Threshold on `p * xi_hat`.
    #[serde(with = "crate::model_io::extended_float")]
    pub s: f64,
    /// Threshold on the radius `-q_gamma`.
    pub t: f64,
    pub alpha: f64,
    pub per_point: Vec<Option<JackknifeStat>>,
}

impl CalibrationProfile {
    /// Sets `s` and `t` at the `1 - alpha/2` empirical quantiles of the
    /// leave-one-out statistics (Bonferroni split of `alpha`).
    pub fn from_stats(per_point: Vec<Option<JackknifeStat>>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::usage(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if per_point.is_empty() {
            return Err(Error::usage("no jackknife statistics"));
        }
        let (p_xi, radius) = sorted_stats(&per_point);
        let level = 1.0 - alpha / 2.0;
        Ok(CalibrationProfile {
            s: empirical_quantile(&p_xi, level),
            t: empirical_quantile(&radius, level),
            alpha,
            per_point,
        })
    }

    /// Fraction of training points the leave-one-out pass flags as unknown.
    pub fn self_flag_rate(&self) -> f64 {
        let flagged = self
            .per_point
            .iter()
            .filter(|s| s.is_some_and(|s| s.p_xi >= self.s || s.radius > self.t))
            .count();
        flagged as f64 / self.per_point.len() as f64
    }
}

/// Ascending leave-one-out statistics; duplicates count as `-inf` shape and
/// zero radius.
fn sorted_stats(per_point: &[Option<JackknifeStat>]) -> (Vec<f64>, Vec<f64>) {
    let mut p_xi: Vec<f64> = per_point
        .iter()
        .map(|s| s.map_or(f64::NEG_INFINITY, |s| s.p_xi))
        .collect();
    let mut radius: Vec<f64> = per_point.iter().map(|s| s.map_or(0.0, |s| s.radius)).collect();
    p_xi.sort_by(f64::total_cmp);
    radius.sort_by(f64::total_cmp);
    (p_xi, radius)
}

/// Order statistic `v_(ceil(level * n))` of ascending `sorted`.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let m = ((level * n as f64).ceil() as usize).clamp(1, n);
    sorted[m - 1]
}

/// Where the decision was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    /// Zero distance to a training point.
    CoincidentKnown,
    /// `p * xi_hat >= s`.
    RejectedShape,
    /// `-q_gamma > t`.
    RejectedRadius,
    Accepted,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::CoincidentKnown => "coincident_known",
            Stage::RejectedShape => "rejected_shape",
            Stage::RejectedRadius => "rejected_radius",
            Stage::Accepted => "accepted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpdcEvidence {
    /// Absent for coincident points.
    pub xi_hat: Option<f64>,
    pub p_xi: Option<f64>,
    /// Absent when the shape test already rejected, or for coincident points.
    pub radius: Option<f64>,
    pub stage: Stage,
}

/// Raw statistics for one query before thresholds are applied.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryStats {
    Coincident,
    Tail { shape: ShapeEstimate, p_xi: f64, radius: f64 },
}

#[derive(Debug, Clone)]
pub struct GpdcModel {
    data: LabeledDataset,
    index: NeighborIndex,
    k: usize,
    gamma: Option<f64>,
    calibration: CalibrationProfile,
    sorted_p_xi: Vec<f64>,
    sorted_radius: Vec<f64>,
}

impl GpdcModel {
    /// Builds the index and calibrates `(s, t)` by scoring every training
    /// point against the remaining `n - 1`.
    pub fn fit(data: &LabeledDataset, config: &GpdcConfig) -> Result<Self> {
        let n = data.len();
        let k = config.k.unwrap_or_else(|| default_k(n));
        if k == 0 || n < k + 2 {
            return Err(Error::usage(format!(
                "GPDC needs n >= k + 2 with k >= 1 (n = {n}, k = {k})"
            )));
        }
        if !(config.alpha > 0.0 && config.alpha <= 1.0) {
            return Err(Error::usage(format!(
                "alpha must lie in (0, 1], got {}",
                config.alpha
            )));
        }
        if let Some(g) = config.gamma {
            if !(g > 0.0 && g < k as f64 / n as f64) {
                return Err(Error::usage(format!(
                    "gamma must lie in (0, k/n = {}), got {g}",
                    k as f64 / n as f64
                )));
            }
        }
        let index = NeighborIndex::from_dataset(data, config.metric)?;
        let p = data.dim() as f64;
        let per_point: Vec<Option<JackknifeStat>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let nn = index.k_smallest_excluding(data.point(i), k + 1, Some(i))?;
                let dists: Vec<f64> = nn.iter().map(|x| x.distance).collect();
                Ok(match tail_stats(&dists, n - 1, p, config.gamma)? {
                    QueryStats::Coincident => None,
                    QueryStats::Tail { p_xi, radius, .. } => Some(JackknifeStat { p_xi, radius }),
                })
            })
            .collect::<Result<_>>()?;
        if per_point.iter().all(Option::is_none) {
            return Err(Error::fit(
                "every training point has an exact duplicate; the data are degenerate",
            ));
        }
        index.reset_stats();
        Self::assemble(
            data.clone(),
            index,
            k,
            config.gamma,
            CalibrationProfile::from_stats(per_point, config.alpha)?,
        )
    }

    /// Rebuilds a model from stored parts (used by the model file reader).
    pub fn from_parts(
        data: LabeledDataset,
        metric: DistanceMetric,
        k: usize,
        gamma: Option<f64>,
        per_point: Vec<Option<JackknifeStat>>,
        alpha: f64,
    ) -> Result<Self> {
        if per_point.len() != data.len() {
            return Err(Error::Model(format!(
                "{} jackknife statistics for {} training points",
                per_point.len(),
                data.len()
            )));
        }
        if k == 0 || data.len() < k + 2 {
            return Err(Error::Model(format!("invalid k = {k} for n = {}", data.len())));
        }
        let index = NeighborIndex::from_dataset(&data, metric)?;
        let calibration = CalibrationProfile::from_stats(per_point, alpha)?;
        Self::assemble(data, index, k, gamma, calibration)
    }

    fn assemble(
        data: LabeledDataset,
        index: NeighborIndex,
        k: usize,
        gamma: Option<f64>,
        calibration: CalibrationProfile,
    ) -> Result<Self> {
        let (sorted_p_xi, sorted_radius) = sorted_stats(&calibration.per_point);
        Ok(GpdcModel {
            data,
            index,
            k,
            gamma,
            calibration,
            sorted_p_xi,
            sorted_radius,
        })
    }

    /// Same model with thresholds recomputed for a new `alpha` from the cached
    /// leave-one-out statistics; no distances are recomputed.
    pub fn recalibrate(&self, alpha: f64) -> Result<Self> {
        let calibration = CalibrationProfile::from_stats(self.calibration.per_point.clone(), alpha)?;
        Ok(GpdcModel {
            calibration,
            ..self.clone()
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn calibration(&self) -> &CalibrationProfile {
        &self.calibration
    }

    /// Shape and radius statistics for `x0` from its `k + 1` nearest
    /// training distances.
    pub fn query_stats(&self, x0: &[f64]) -> Result<QueryStats> {
        let nn = self.index.k_smallest_distances(x0, self.k + 1)?;
        let dists: Vec<f64> = nn.iter().map(|x| x.distance).collect();
        tail_stats(&dists, self.data.len(), self.data.dim() as f64, self.gamma)
    }

    /// Applies the thresholds to precomputed statistics.
    pub fn decide(&self, stats: &QueryStats) -> GpdcEvidence {
        decide_with(stats, self.calibration.s, self.calibration.t)
    }

    pub fn score(&self, x0: &[f64]) -> Result<(Verdict, GpdcEvidence)> {
        let stats = self.query_stats(x0)?;
        let evidence = self.decide(&stats);
        let label = match evidence.stage {
            Stage::CoincidentKnown | Stage::Accepted => Label::Known,
            Stage::RejectedShape | Stage::RejectedRadius => Label::Unknown,
        };
        let verdict = Verdict {
            label,
            score: self.rank_score(&stats),
            evidence: Evidence::Gpdc(evidence.clone()),
        };
        Ok((verdict, evidence))
    }

    /// Unknownness: the larger of the empirical-CDF positions of `p * xi_hat`
    /// and of the radius among the leave-one-out statistics. Values beyond the
    /// largest leave-one-out value score above 1, growing linearly with the
    /// excess relative to the finite training range.
    pub fn continuous_score(&self, x0: &[f64]) -> Result<f64> {
        Ok(self.rank_score(&self.query_stats(x0)?))
    }

    pub fn rank_score(&self, stats: &QueryStats) -> f64 {
        match stats {
            QueryStats::Coincident => 0.0,
            QueryStats::Tail { p_xi, radius, .. } => {
                extended_rank(&self.sorted_p_xi, *p_xi).max(extended_rank(&self.sorted_radius, *radius))
            }
        }
    }
}

fn extended_rank(sorted: &[f64], v: f64) -> f64 {
    let n = sorted.len();
    let max = sorted[n - 1];
    if v <= max {
        return sorted.partition_point(|x| *x <= v) as f64 / n as f64;
    }
    let min = sorted.iter().copied().find(|x| x.is_finite()).unwrap_or(max);
    let span = max - min;
    if span > 0.0 {
        1.0 + (v - max) / span
    } else {
        1.0
    }
}

fn decide_with(stats: &QueryStats, s: f64, t: f64) -> GpdcEvidence {
    match stats {
        QueryStats::Coincident => GpdcEvidence {
            xi_hat: None,
            p_xi: None,
            radius: None,
            stage: Stage::CoincidentKnown,
        },
        QueryStats::Tail { shape, p_xi, radius } => {
            if *p_xi >= s {
                GpdcEvidence {
                    xi_hat: Some(shape.xi_hat),
                    p_xi: Some(*p_xi),
                    radius: None,
                    stage: Stage::RejectedShape,
                }
            } else {
                GpdcEvidence {
                    xi_hat: Some(shape.xi_hat),
                    p_xi: Some(*p_xi),
                    radius: Some(*radius),
                    stage: if *radius > t {
                        Stage::RejectedRadius
                    } else {
                        Stage::Accepted
                    },
                }
            }
        }
    }
}

/// Statistics from the `k + 1` smallest distances (ascending) out of `n`.
fn tail_stats(nearest: &[f64], n: usize, p: f64, gamma: Option<f64>) -> Result<QueryStats> {
    if nearest[0] == 0.0 {
        return Ok(QueryStats::Coincident);
    }
    let shape = hill_shape_from_nearest(nearest, n)?;
    let k = shape.k as f64;
    // With gamma = 1/n the factor n*gamma/k reduces to 1/k.
    let scaled = gamma.map_or(1.0 / k, |g| n as f64 * g / k);
    let radius = -shape.u * scaled.powf(-shape.xi_hat);
    Ok(QueryStats::Tail {
        p_xi: p * shape.xi_hat,
        radius,
        shape,
    })
}

impl OpenSetClassifier for GpdcModel {
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
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, n_per: usize, centers: &[[f64; 2]]) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per {
                points.push(vec![
                    center[0] + normal.sample(&mut rng),
                    center[1] + normal.sample(&mut rng),
                ]);
                labels.push(format!("c{c}"));
            }
        }
        LabeledDataset::new(points, &labels).unwrap()
    }

    fn cfg(k: usize, alpha: f64) -> GpdcConfig {
        GpdcConfig {
            k: Some(k),
            alpha,
            ..Default::default()
        }
    }

    #[test]
    fn empirical_quantile_picks_order_statistic() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&v, 0.5), 2.0);
        assert_eq!(empirical_quantile(&v, 0.51), 3.0);
        assert_eq!(empirical_quantile(&v, 1.0), 4.0);
        assert_eq!(empirical_quantile(&v, 0.0), 1.0);
    }

    #[test]
    fn self_flag_rate_bounded_by_alpha() {
        let data = blobs(1, 300, &[[0.0, 0.0], [10.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(20, 0.05)).unwrap();
        let rate = model.calibration().self_flag_rate();
        assert!(rate <= 0.05 + 1.0 / 600.0, "{rate}");
        assert!(model.calibration().s > -1.0);
        assert!(model.calibration().t > 0.0);
    }

    #[test]
    fn alpha_one_puts_thresholds_at_medians() {
        let data = blobs(2, 150, &[[0.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(15, 1.0)).unwrap();
        let (p_xi, radius) = sorted_stats(&model.calibration().per_point);
        assert_eq!(model.calibration().s, empirical_quantile(&p_xi, 0.5));
        assert_eq!(model.calibration().t, empirical_quantile(&radius, 0.5));
        assert!(model.calibration().self_flag_rate() >= 0.5);
    }

    #[test]
    fn refit_is_deterministic() {
        let data = blobs(3, 200, &[[0.0, 0.0], [5.0, 5.0]]);
        let a = GpdcModel::fit(&data, &cfg(20, 0.05)).unwrap();
        let b = GpdcModel::fit(&data, &cfg(20, 0.05)).unwrap();
        assert_eq!(a.calibration(), b.calibration());
    }

    #[test]
    fn recalibrate_matches_fresh_fit() {
        let data = blobs(4, 200, &[[0.0, 0.0]]);
        let a = GpdcModel::fit(&data, &cfg(20, 0.05)).unwrap().recalibrate(0.2).unwrap();
        let b = GpdcModel::fit(&data, &cfg(20, 0.2)).unwrap();
        assert_eq!(a.calibration(), b.calibration());
    }

    #[test]
    fn coincident_point_is_known() {
        let data = blobs(5, 100, &[[0.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(10, 0.05)).unwrap();
        let (v, e) = model.score(data.point(17)).unwrap();
        assert_eq!(v.label, Label::Known);
        assert_eq!(e.stage, Stage::CoincidentKnown);
        assert_eq!(v.score, 0.0);
    }

    #[test]
    fn far_point_rejected_by_shape() {
        let data = blobs(6, 400, &[[0.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(20, 0.05)).unwrap();
        let (v, e) = model.score(&[200.0, 0.0]).unwrap();
        assert_eq!(v.label, Label::Unknown);
        assert_eq!(e.stage, Stage::RejectedShape);
        assert!(e.radius.is_none());
        assert!(v.score > 0.99);
    }

    #[test]
    fn decision_consistency() {
        let data = blobs(7, 300, &[[0.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(20, 0.1)).unwrap();
        let (s, t) = (model.calibration().s, model.calibration().t);
        for i in 0..200 {
            let x = [-5.0 + i as f64 * 0.05, 0.3];
            let stats = model.query_stats(&x).unwrap();
            let (v, _) = model.score(&x).unwrap();
            if let QueryStats::Tail { p_xi, radius, .. } = stats {
                assert_eq!(v.label == Label::Unknown, p_xi >= s || radius > t);
            }
        }
    }

    #[test]
    fn score_issues_one_query_of_k_plus_one() {
        let data = blobs(8, 200, &[[0.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(12, 0.05)).unwrap();
        model.index().reset_stats();
        model.score(&[0.2, 0.1]).unwrap();
        let st = model.index().stats();
        assert_eq!(st.knn_queries, 1);
        assert_eq!(st.neighbors_returned, 13);
    }

    #[test]
    fn degenerate_data_fails() {
        let data = LabeledDataset::single_class(vec![vec![1.0, 1.0]; 30], "k").unwrap();
        assert!(matches!(GpdcModel::fit(&data, &cfg(5, 0.05)), Err(Error::Fit { .. })));
    }

    #[test]
    fn parameter_validation() {
        let data = blobs(9, 20, &[[0.0, 0.0]]);
        assert!(GpdcModel::fit(&data, &cfg(19, 0.05)).is_err());
        assert!(GpdcModel::fit(&data, &cfg(5, 0.0)).is_err());
        let bad_gamma = GpdcConfig { gamma: Some(0.5), ..cfg(5, 0.05) };
        assert!(GpdcModel::fit(&data, &bad_gamma).is_err());
        let model = GpdcModel::fit(&data, &cfg(5, 0.05)).unwrap();
        assert!(model.score(&[1.0]).is_err());
    }

    #[test]
    fn explicit_gamma_one_over_n_matches_default() {
        let data = blobs(10, 100, &[[0.0, 0.0]]);
        let a = GpdcModel::fit(&data, &cfg(10, 0.05)).unwrap();
        let b = GpdcModel::fit(&data, &GpdcConfig { gamma: Some(1.0 / 100.0), ..cfg(10, 0.05) }).unwrap();
        let x = [0.3, -0.2];
        let (QueryStats::Tail { radius: ra, .. }, QueryStats::Tail { radius: rb, .. }) =
            (a.query_stats(&x).unwrap(), b.query_stats(&x).unwrap())
        else {
            panic!("expected tail statistics");
        };
        assert!((ra - rb).abs() < 1e-12 * ra);
    }

    #[test]
    fn continuous_score_monotone_along_ray() {
        let data = blobs(11, 400, &[[0.0, 0.0]]);
        let model = GpdcModel::fit(&data, &cfg(20, 0.05)).unwrap();
        let mut prev = 0.0;
        for i in 0..60 {
            let x = [3.0 + i as f64 * 0.25, 0.0];
            let s = model.continuous_score(&x).unwrap();
            assert!(s >= prev, "score dropped at step {i}: {s} < {prev}");
            prev = s;
        }
    }
}
