//! Dataset model, distance semantics and the verdict type shared by every
//! classifier.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpdc::GpdcEvidence;

/// Distance used between points. Euclidean unless configured otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Manhattan,
    /// Minkowski distance of order `q >= 1`.
    Minkowski(f64),
}

impl DistanceMetric {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DistanceMetric::Minkowski(q) if !(q.is_finite() && q >= 1.0) => Err(Error::usage(
                format!("Minkowski order must be a finite value >= 1, got {q}"),
            )),
            _ => Ok(()),
        }
    }

    /// Distance between two points of equal length. Callers are expected to
    /// have checked the dimensions; see [`distance`] for the checked form.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match *self {
            DistanceMetric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            DistanceMetric::Minkowski(q) => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs().powf(q))
                .sum::<f64>()
                .powf(1.0 / q),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "euclidean" | "l2" => Ok(DistanceMetric::Euclidean),
            "manhattan" | "l1" => Ok(DistanceMetric::Manhattan),
            other => {
                let q = other
                    .strip_prefix("minkowski:")
                    .and_then(|q| q.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::usage(format!(
                            "unknown metric '{s}' (expected euclidean, manhattan or minkowski:<q>)"
                        ))
                    })?;
                let m = DistanceMetric::Minkowski(q);
                m.validate()?;
                Ok(m)
            }
        }
    }
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceMetric::Euclidean => f.write_str("euclidean"),
            DistanceMetric::Manhattan => f.write_str("manhattan"),
            DistanceMetric::Minkowski(q) => write!(f, "minkowski:{q}"),
        }
    }
}

/// Checked distance between `a` and `b` under `metric`.
pub fn distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(metric.eval(a, b))
}

/// Elementwise negation of distances, `R_i = -D_i`.
pub fn negate_distances(d: &[f64]) -> Vec<f64> {
    d.iter().map(|x| -x).collect()
}

/// Ascending order statistics. The sort is stable, so equal values keep their
/// original relative order.
pub fn order_statistics(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted
}

/// Training corpus: `n` points in `R^p` with opaque string labels mapped to
/// dense ids. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    dim: usize,
    coords: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new<S: AsRef<str>>(points: Vec<Vec<f64>>, labels: &[S]) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::data(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let mut ids = HashMap::new();
        let mut class_names = Vec::new();
        let dense: Vec<usize> = labels
            .iter()
            .map(|l| {
                *ids.entry(l.as_ref().to_string()).or_insert_with(|| {
                    class_names.push(l.as_ref().to_string());
                    class_names.len() - 1
                })
            })
            .collect();
        Self::from_parts(points, dense, class_names)
    }

    /// Every point gets the same label.
    pub fn single_class(points: Vec<Vec<f64>>, label: &str) -> Result<Self> {
        let n = points.len();
        Self::from_parts(points, vec![0; n], vec![label.to_string()])
    }

    fn from_parts(points: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::data(format!("need at least 2 points, got {n}")));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::data("points must have dimension >= 1"));
        }
        let mut coords = Vec::with_capacity(n * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::data(format!(
                    "point {i} has dimension {} but expected {dim}",
                    p.len()
                )));
            }
            if let Some(j) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!("point {i} coordinate {j} is not finite")));
            }
            coords.extend_from_slice(p);
        }
        Ok(LabeledDataset {
            dim,
            coords,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Dense class id of point `i`.
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_name(&self, id: usize) -> &str {
        &self.class_names[id]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn class_count(&self, id: usize) -> usize {
        self.labels.iter().filter(|&&l| l == id).count()
    }

    pub fn to_points(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    /// Rows whose class id satisfies `keep`, with class names preserved.
    pub fn filter_classes(&self, keep: impl Fn(usize) -> bool) -> Result<Self> {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for (i, p) in self.points().enumerate() {
            if keep(self.labels[i]) {
                points.push(p.to_vec());
                labels.push(self.class_names[self.labels[i]].clone());
            }
        }
        LabeledDataset::new(points, &labels)
    }

    /// Appends a labelled point, returning its index.
    pub fn push(&mut self, point: &[f64], label: &str) -> Result<usize> {
        if point.len() != self.dim {
            return Err(Error::usage(format!(
                "dimension mismatch: point has {} coordinates, dataset has {}",
                point.len(),
                self.dim
            )));
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("point has a non-finite coordinate"));
        }
        let id = match self.class_id(label) {
            Some(id) => id,
            None => {
                self.class_names.push(label.to_string());
                self.class_names.len() - 1
            }
        };
        self.coords.extend_from_slice(point);
        self.labels.push(id);
        Ok(self.labels.len() - 1)
    }
}

/// Open-set decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Known,
    Unknown,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Known => f.write_str("known"),
            Label::Unknown => f.write_str("unknown"),
        }
    }
}

/// Classifier-specific detail backing a verdict.
#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    Gpdc(GpdcEvidence),
    Gevc { d0_min: f64 },
    Evm { psi: f64 },
    /// Produced by the per-class wrapper: index of the member whose score was
    /// kept (the least unknown one) plus its own evidence.
    PerClass { member: usize, inner: Box<Evidence> },
}

/// Decision for one query point. `score` is an unknownness score: higher
/// means more likely unknown. Its scale is classifier specific.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub label: Label,
    pub score: f64,
    pub evidence: Evidence,
}

/// Which column of a CSV row holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    First,
    #[default]
    Last,
    /// Every field is a feature.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            label_column: LabelColumn::Last,
            has_header: false,
            delimiter: b',',
        }
    }
}

/// Parsed CSV rows. `labels` is `None` when the options declare no label column.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl CsvTable {
    pub fn into_dataset(self) -> Result<LabeledDataset> {
        let labels = self
            .labels
            .ok_or_else(|| Error::usage("CSV has no label column; cannot build a training set"))?;
        LabeledDataset::new(self.points, &labels)
    }
}

pub fn read_csv_path(path: &Path, opts: &CsvOptions) -> Result<CsvTable> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    read_csv(file, opts)
}

/// Reads numeric rows. Blank lines are skipped. Non-numeric feature fields are
/// rejected with their 1-based row and column.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<CsvTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .delimiter(opts.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1 + usize::from(opts.has_header);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<&str> = record.iter().collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::data(format!(
                    "row {row}: expected {w} fields, found {}",
                    fields.len()
                )))
            }
            _ => {}
        }
        let (label, features, offset) = match opts.label_column {
            LabelColumn::First => (Some(fields[0]), &fields[1..], 2),
            LabelColumn::Last => (Some(fields[fields.len() - 1]), &fields[..fields.len() - 1], 1),
            LabelColumn::None => (None, &fields[..], 1),
        };
        if features.is_empty() {
            return Err(Error::data(format!("row {row}: no feature columns")));
        }
        let point = features
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::data(format!(
                            "row {row}, column {}: '{f}' is not a finite number",
                            c + offset
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
        if let Some(l) = label {
            labels.push(l.to_string());
        }
    }
    Ok(CsvTable {
        points,
        labels: (opts.label_column != LabelColumn::None).then_some(labels),
    })
}

/// Per-feature z-scoring fitted on a training set. Constant features are
/// centred but left unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &LabeledDataset) -> Self {
        let n = data.len() as f64;
        let p = data.dim();
        let mut mean = vec![0.0; p];
        for x in data.points() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; p];
        for x in data.points() {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m) / (n - 1.0);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let points = data.points().map(|x| self.apply(x)).collect();
        let labels: Vec<&str> = data.labels().iter().map(|&l| data.class_name(l)).collect();
        LabeledDataset::new(points, &labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let e = DistanceMetric::Euclidean;
        assert_eq!(distance(&[0.0, 0.0], &[3.0, 4.0], e).unwrap(), 5.0);
        assert_eq!(distance(&[1.0, 1.0], &[1.0, 1.0], e).unwrap(), 0.0);
        assert_eq!(
            distance(&[0.0; 3], &[1.0; 3], DistanceMetric::Manhattan).unwrap(),
            3.0
        );
        assert!((distance(&[0.0, 0.0], &[3.0, 4.0], DistanceMetric::Minkowski(2.0)).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn distance_dimension_mismatch() {
        assert!(matches!(
            distance(&[0.0], &[1.0, 2.0], DistanceMetric::Euclidean),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn negation_and_order_statistics() {
        assert_eq!(negate_distances(&[1.0, 0.5, 2.0]), vec![-1.0, -0.5, -2.0]);
        assert!(negate_distances(&[]).is_empty());
        assert_eq!(order_statistics(&[-1.0, -0.5, -2.0]), vec![-2.0, -1.0, -0.5]);
    }

    #[test]
    fn metric_parse() {
        assert_eq!(DistanceMetric::parse("L2").unwrap(), DistanceMetric::Euclidean);
        assert_eq!(DistanceMetric::parse("minkowski:3").unwrap(), DistanceMetric::Minkowski(3.0));
        assert!(DistanceMetric::parse("minkowski:0.5").is_err());
        assert!(DistanceMetric::parse("cosine").is_err());
    }

    #[test]
    fn dataset_invariants() {
        assert!(LabeledDataset::new(vec![vec![1.0]], &["a"]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0], vec![1.0, 2.0]], &["a", "a"]).is_err());
        assert!(LabeledDataset::new(vec![vec![f64::NAN], vec![1.0]], &["a", "a"]).is_err());
        let d = LabeledDataset::new(vec![vec![1.0], vec![2.0], vec![3.0]], &["x", "y", "x"]).unwrap();
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.labels(), &[0, 1, 0]);
        assert_eq!(d.class_name(1), "y");
        assert_eq!(d.class_count(0), 2);
    }

    #[test]
    fn csv_label_first_and_last() {
        let text = "a,1,2\nb,3,4\n";
        let opts = CsvOptions {
            label_column: LabelColumn::First,
            ..Default::default()
        };
        let t = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(t.points, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(t.labels.unwrap(), vec!["a", "b"]);

        let text = "x;y;class\n1;2;k\n\n3;4;k\n";
        let opts = CsvOptions {
            label_column: LabelColumn::Last,
            has_header: true,
            delimiter: b';',
        };
        let t = read_csv(text.as_bytes(), &opts).unwrap();
        assert_eq!(t.points.len(), 2);
    }

    #[test]
    fn csv_rejects_non_numeric_with_position() {
        let text = "1,2,a\n3,oops,b\n";
        let err = read_csv(text.as_bytes(), &CsvOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");
    }

    #[test]
    fn standardizer_centres_and_scales() {
        let d = LabeledDataset::single_class(vec![vec![1.0, 5.0], vec![3.0, 5.0]], "k").unwrap();
        let s = Standardizer::fit(&d);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale[1], 1.0);
        let z = s.apply(&[3.0, 5.0]);
        assert!((z[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(z[1], 0.0);
    }
}
