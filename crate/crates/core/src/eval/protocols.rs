use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::metrics::{roc_auc, Confusion, RocCurve};
use crate::eval::toy::{generate_toy, GaussianSpec, TestPoint, ToyConfig};
use crate::evm::{EvmConfig, EvmModel};
use crate::gevc::{GevcConfig, GevcModel};
use crate::gpdc::{GpdcConfig, GpdcModel, QueryStats};
use crate::model_io::ModelKind;
use crate::rng::substream;

/// Hyper-parameters for the toy comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParams {
    /// `None` uses the default exceedance count.
    pub k_gpdc: Option<usize>,
    pub k_evm: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams { k_gpdc: None, k_evm: 20 }
    }
}

/// Per-test-point shape estimate, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiRecord {
    pub point: Vec<f64>,
    pub is_known: bool,
    /// `None` for a point that coincides with a training point.
    pub xi_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyResult {
    pub seed: u64,
    pub evm: RocCurve,
    pub gpdc: RocCurve,
    pub gevc: RocCurve,
    pub xi: Vec<XiRecord>,
}

/// Fits all three classifiers on the toy training set and scores the test
/// set. The ROC scores are monotone in each classifier's decision statistic.
pub fn run_toy(cfg: &ToyConfig, params: &ToyParams) -> Result<ToyResult> {
    let (train, test) = generate_toy(cfg)?;
    let gpdc = GpdcModel::fit(
        &train,
        &GpdcConfig {
            k: params.k_gpdc,
            ..Default::default()
        },
    )?;
    let gevc = GevcModel::fit(&train, &GevcConfig::default())?;
    let evm = EvmModel::fit(
        &train,
        &EvmConfig {
            k: params.k_evm,
            ..Default::default()
        },
    )?;

    let rows = test
        .par_iter()
        .map(|t| {
            let stats = gpdc.query_stats(&t.point)?;
            let xi_hat = match &stats {
                QueryStats::Coincident => None,
                QueryStats::Tail { shape, .. } => Some(shape.xi_hat),
            };
            let (_, d0) = gevc.score(&t.point)?;
            Ok((gpdc.rank_score(&stats), d0, evm.neg_log_psi(&t.point)?, xi_hat))
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = |f: &dyn Fn(&(f64, f64, f64, Option<f64>)) -> f64| {
        roc_auc(&rows.iter().zip(&test).map(|(r, t)| (f(r), !t.is_known)).collect::<Vec<_>>())
    };
    Ok(ToyResult {
        seed: cfg.seed,
        gpdc: curve(&|r| r.0)?,
        gevc: curve(&|r| r.1)?,
        evm: curve(&|r| r.2)?,
        xi: test
            .iter()
            .zip(&rows)
            .map(|(t, r)| XiRecord {
                point: t.point.clone(),
                is_known: t.is_known,
                xi_hat: r.3,
            })
            .collect(),
    })
}

/// Settings for the openness sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct OletterConfig {
    pub n_known: usize,
    /// Largest number of unknown classes mixed into the test set.
    pub max_unknown: usize,
    pub reps: usize,
    pub seed: u64,
    pub k_gpdc: usize,
    pub k_evm: usize,
    /// Type-I levels swept for GPDC and GEVC.
    pub alpha_grid: Vec<f64>,
    /// Probability thresholds swept for the EVM.
    pub delta_grid: Vec<f64>,
    pub methods: Vec<ModelKind>,
}

impl OletterConfig {
    /// 15 known classes, up to 11 unknown, 20 repetitions.
    pub fn letter(seed: u64) -> Self {
        OletterConfig {
            n_known: 15,
            max_unknown: 11,
            reps: 20,
            seed,
            k_gpdc: 22,
            k_evm: 75,
            alpha_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5],
            delta_grid: vec![0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9],
            methods: vec![ModelKind::Gpdc, ModelKind::Gevc, ModelKind::Evm],
        }
    }

    /// Reduced run for synthetic data: 5 known and 3 unknown classes, one
    /// repetition.
    pub fn surrogate(seed: u64) -> Self {
        OletterConfig {
            n_known: 5,
            max_unknown: 3,
            reps: 1,
            ..Self::letter(seed)
        }
    }

    fn thresholds(&self, m: ModelKind) -> &[f64] {
        match m {
            ModelKind::Evm => &self.delta_grid,
            ModelKind::Gpdc | ModelKind::Gevc => &self.alpha_grid,
        }
    }
}

/// F-measure at one threshold; `None` when the test set has no unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub f_measure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodCurve {
    pub method: ModelKind,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpennessStep {
    pub rep: usize,
    pub known: Vec<String>,
    /// Unknown classes present in this step's test set.
    pub unknown: Vec<String>,
    pub curves: Vec<MethodCurve>,
}

/// Gaussian classes with random means for exercising the openness sweep
/// without the LETTER file. Returns `(train, test)` sharing class names.
pub fn surrogate_classes(
    n_classes: usize,
    dim: usize,
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    use rand::Rng;
    let mut rng = substream(seed, "surrogate", 0);
    let specs: Vec<(String, GaussianSpec)> = (0..n_classes)
        .map(|c| {
            let mean = (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect();
            let sd = rng.random_range(0.5..1.0);
            (format!("c{c:02}"), GaussianSpec::isotropic(mean, sd, train_per_class, test_per_class))
        })
        .collect();
    let cfg = ToyConfig {
        known: specs.clone(),
        unknown: GaussianSpec::isotropic(vec![0.0; dim], 1.0, 0, 1),
        seed,
    };
    let (train, _) = generate_toy(&cfg)?;
    // Test draws come from a separate stream so they do not depend on the
    // training counts.
    let test_cfg = ToyConfig {
        known: specs
            .into_iter()
            .map(|(n, g)| (n, GaussianSpec { train: g.test.max(1), test: 0, ..g }))
            .collect(),
        seed: seed ^ 0x5eed,
        ..cfg
    };
    let (test, _) = generate_toy(&test_cfg)?;
    Ok((train, test))
}

/// Per-test-point statistics of each fitted method, computed once and
/// thresholded many times.
struct Scored {
    gpdc: Option<(GpdcModel, Vec<QueryStats>)>,
    gevc: Option<(GevcModel, Vec<f64>)>,
    evm: Option<Vec<f64>>,
}

impl Scored {
    fn decisions(&self, m: ModelKind, threshold: f64) -> Result<Vec<Label>> {
        let unknown = |b: bool| if b { Label::Unknown } else { Label::Known };
        Ok(match m {
            ModelKind::Gpdc => {
                let (model, stats) = self.gpdc.as_ref().expect("gpdc scored");
                let model = model.recalibrate(threshold)?;
                stats
                    .iter()
                    .map(|s| match model.decide(s).stage {
                        crate::gpdc::Stage::RejectedShape | crate::gpdc::Stage::RejectedRadius => Label::Unknown,
                        _ => Label::Known,
                    })
                    .collect()
            }
            ModelKind::Gevc => {
                let (model, d0) = self.gevc.as_ref().expect("gevc scored");
                let w = model.fitted();
                d0.iter().map(|d| unknown(w.cdf(-d) < threshold)).collect()
            }
            ModelKind::Evm => {
                let psi = self.evm.as_ref().expect("evm scored");
                psi.iter().map(|p| unknown(*p < threshold)).collect()
            }
        })
    }
}

/// Openness sweep: per repetition, draw the known classes, fit every method
/// on their training rows, then grow the set of unknown classes in the test
/// set one class at a time.
pub fn run_oletter(
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &OletterConfig,
) -> Result<Vec<OpennessStep>> {
    let classes: Vec<String> = train.class_names().to_vec();
    if cfg.n_known == 0 || classes.len() < cfg.n_known + 1 {
        return Err(Error::usage(format!(
            "{} classes available; need {} known plus at least one unknown",
            classes.len(),
            cfg.n_known
        )));
    }
    if train.dim() != test.dim() {
        return Err(Error::usage("train and test dimensions differ"));
    }
    if cfg.methods.is_empty() || cfg.reps == 0 {
        return Err(Error::usage("nothing to run: no methods or zero repetitions"));
    }
    let steps: Vec<Vec<OpennessStep>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| oletter_rep(train, test, cfg, &classes, rep))
        .collect::<Result<_>>()?;
    Ok(steps.into_iter().flatten().collect())
}

fn oletter_rep(
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &OletterConfig,
    classes: &[String],
    rep: usize,
) -> Result<Vec<OpennessStep>> {
    let mut rng = substream(cfg.seed, "oletter", rep as u64);
    let mut order = classes.to_vec();
    order.shuffle(&mut rng);
    let mut known = order[..cfg.n_known].to_vec();
    known.sort();
    let unknown_pool: Vec<String> = order[cfg.n_known..].iter().take(cfg.max_unknown).cloned().collect();

    let is_known = |name: &str| known.iter().any(|k| k == name);
    let fit_data = train.filter_classes(|c| is_known(train.class_name(c)))?;

    // Test rows of the known classes and of each unknown class, in file order.
    let rows_of = |pred: &dyn Fn(&str) -> bool| -> Vec<usize> {
        (0..test.len()).filter(|&i| pred(test.class_name(test.label(i)))).collect()
    };
    let mut candidates = rows_of(&is_known);
    let known_rows = candidates.len();
    for u in &unknown_pool {
        candidates.extend(rows_of(&|n: &str| n == u));
    }
    let points: Vec<&[f64]> = candidates.iter().map(|&i| test.point(i)).collect();
    let truth: Vec<Label> = candidates
        .iter()
        .enumerate()
        .map(|(j, _)| if j < known_rows { Label::Known } else { Label::Unknown })
        .collect();

    let has = |m: ModelKind| cfg.methods.contains(&m);
    let scored = Scored {
        gpdc: if has(ModelKind::Gpdc) {
            let model = GpdcModel::fit(
                &fit_data,
                &GpdcConfig {
                    k: Some(cfg.k_gpdc),
                    ..Default::default()
                },
            )?;
            let stats = points.iter().map(|p| model.query_stats(p)).collect::<Result<_>>()?;
            Some((model, stats))
        } else {
            None
        },
        gevc: if has(ModelKind::Gevc) {
            let model = GevcModel::fit(&fit_data, &GevcConfig::default())?;
            let d0 = points.iter().map(|p| model.score(p).map(|s| s.1)).collect::<Result<_>>()?;
            Some((model, d0))
        } else {
            None
        },
        evm: if has(ModelKind::Evm) {
            let model = EvmModel::fit(
                &fit_data,
                &EvmConfig {
                    k: cfg.k_evm,
                    ..Default::default()
                },
            )?;
            Some(points.iter().map(|p| model.psi(p)).collect::<Result<_>>()?)
        } else {
            None
        },
    };

    // All decisions per (method, threshold) over every candidate row; each
    // step then uses a prefix.
    let decisions: Vec<(ModelKind, Vec<(f64, Vec<Label>)>)> = cfg
        .methods
        .iter()
        .map(|&m| {
            let per_t = cfg
                .thresholds(m)
                .iter()
                .map(|&t| Ok((t, scored.decisions(m, t)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((m, per_t))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(unknown_pool.len() + 1);
    let mut end = known_rows;
    for step in 0..=unknown_pool.len() {
        if step > 0 {
            let u = &unknown_pool[step - 1];
            end += (0..test.len()).filter(|&i| test.class_name(test.label(i)) == u).count();
        }
        let curves = decisions
            .iter()
            .map(|(m, per_t)| MethodCurve {
                method: *m,
                points: per_t
                    .iter()
                    .map(|(t, pred)| {
                        let pairs: Vec<(Label, Label)> =
                            pred[..end].iter().copied().zip(truth[..end].iter().copied()).collect();
                        let c = Confusion::from_decisions(&pairs);
                        CurvePoint {
                            threshold: *t,
                            f_measure: (c.tp + c.fn_ > 0).then(|| c.f_measure()),
                        }
                    })
                    .collect(),
            })
            .collect();
        out.push(OpennessStep {
            rep,
            known: known.clone(),
            unknown: unknown_pool[..step].to_vec(),
            curves,
        });
    }
    Ok(out)
}

/// Result of one method in the binary novelty protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodOutcome {
    Roc(RocCurve),
    Unsupported(String),
}

impl MethodOutcome {
    pub fn auc(&self) -> Option<f64> {
        match self {
            MethodOutcome::Roc(r) => Some(r.auc),
            MethodOutcome::Unsupported(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyConfig {
    /// GPDC exceedance counts as fractions of the training size.
    pub tail_fractions: Vec<f64>,
    pub k_evm: usize,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig {
            tail_fractions: vec![0.0025, 0.01, 0.025, 0.05, 0.10],
            k_evm: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailSweepPoint {
    pub fraction: f64,
    pub k: usize,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoveltyResult {
    pub gpdc: Vec<TailSweepPoint>,
    pub gevc: MethodOutcome,
    pub evm: MethodOutcome,
}

impl NoveltyResult {
    pub fn best_gpdc(&self) -> Option<&TailSweepPoint> {
        self.gpdc.iter().max_by(|a, b| a.roc.auc.total_cmp(&b.roc.auc))
    }
}

/// Exceedance count for a tail fraction of `n` points.
pub fn k_for_fraction(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::usage(format!("tail fraction must lie in (0, 1), got {fraction}")));
    }
    Ok(((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(2).max(1)))
}

/// Novelty detection with known-only training data: GPDC over a sweep of
/// tail sizes, GEVC, and the EVM when the training data allow it.
pub fn run_binary_novelty(train: &LabeledDataset, test: &[TestPoint], cfg: &NoveltyConfig) -> Result<NoveltyResult> {
    let truth: Vec<bool> = test.iter().map(|t| !t.is_known).collect();
    let roc_of = |scores: Vec<f64>| roc_auc(&scores.into_iter().zip(truth.iter().copied()).collect::<Vec<_>>());

    let gpdc = cfg
        .tail_fractions
        .iter()
        .map(|&fraction| {
            let k = k_for_fraction(fraction, train.len())?;
            let model = GpdcModel::fit(
                train,
                &GpdcConfig {
                    k: Some(k),
                    ..Default::default()
                },
            )?;
            let scores = test
                .par_iter()
                .map(|t| model.continuous_score(&t.point))
                .collect::<Result<Vec<_>>>()?;
            Ok(TailSweepPoint {
                fraction,
                k,
                roc: roc_of(scores)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let gevc_model = GevcModel::fit(train, &GevcConfig::default())?;
    let d0 = test
        .par_iter()
        .map(|t| gevc_model.score(&t.point).map(|s| s.1))
        .collect::<Result<Vec<_>>>()?;
    let gevc = MethodOutcome::Roc(roc_of(d0)?);

    let evm = match EvmModel::fit(
        train,
        &EvmConfig {
            k: cfg.k_evm,
            ..Default::default()
        },
    ) {
        Ok(model) => {
            let s = test
                .par_iter()
                .map(|t| model.neg_log_psi(&t.point))
                .collect::<Result<Vec<_>>>()?;
            MethodOutcome::Roc(roc_of(s)?)
        }
        Err(Error::Unsupported(msg)) => MethodOutcome::Unsupported(msg),
        Err(e) => return Err(e),
    };
    Ok(NoveltyResult { gpdc, gevc, evm })
}
