//! Readers for the UCI LETTER and ann-thyroid file layouts.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::{read_csv, CsvOptions, LabelColumn, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::toy::TestPoint;
use crate::rng::substream;

pub const LETTER_FEATURES: usize = 16;
pub const THYROID_FEATURES: usize = 21;
/// Rows of the LETTER file used for training; the rest form the test set.
pub const LETTER_TRAIN_ROWS: usize = 15_000;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Comma-separated rows: letter label, then 16 integer features.
pub fn read_letter<R: Read>(reader: R) -> Result<LabeledDataset> {
    let opts = CsvOptions {
        label_column: LabelColumn::First,
        ..Default::default()
    };
    let data = read_csv(reader, &opts)?.into_dataset()?;
    if data.dim() != LETTER_FEATURES {
        return Err(Error::data(format!(
            "LETTER rows have {LETTER_FEATURES} features, found {}",
            data.dim()
        )));
    }
    Ok(data)
}

pub fn load_letter(path: &Path) -> Result<LabeledDataset> {
    read_letter(open(path)?)
}

/// Splits off the first `n_train` rows as the training set.
pub fn split_rows(data: &LabeledDataset, n_train: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    if n_train == 0 || n_train >= data.len() {
        return Err(Error::usage(format!(
            "cannot split {} rows into {n_train} training rows and a nonempty test set",
            data.len()
        )));
    }
    let part = |range: std::ops::Range<usize>| {
        let labels: Vec<&str> = range.clone().map(|i| data.class_name(data.label(i))).collect();
        LabeledDataset::new(range.map(|i| data.point(i).to_vec()).collect(), &labels)
    };
    Ok((part(0..n_train)?, part(n_train..data.len())?))
}

/// Rows of 21 numeric features followed by the class, separated by
/// whitespace or commas. Blank lines are skipped.
pub fn read_thyroid<R: Read>(reader: R) -> Result<LabeledDataset> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != THYROID_FEATURES + 1 {
            return Err(Error::data(format!(
                "line {}: expected {} fields, found {}",
                lineno + 1,
                THYROID_FEATURES + 1,
                fields.len()
            )));
        }
        let point = fields[..THYROID_FEATURES]
            .iter()
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::data(format!("line {}, column {}: '{f}' is not a number", lineno + 1, col + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(point);
        // Class codes may be written as "3" or "3.0".
        let class = fields[THYROID_FEATURES];
        labels.push(match class.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 => format!("{}", v as i64),
            _ => class.to_string(),
        });
    }
    LabeledDataset::new(points, &labels)
}

pub fn load_thyroid(path: &Path) -> Result<LabeledDataset> {
    read_thyroid(open(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThyroidSplit {
    /// Class labels treated as healthy (known).
    pub healthy: Vec<String>,
    pub test_sick: usize,
    pub test_healthy: usize,
    pub seed: u64,
}

impl Default for ThyroidSplit {
    fn default() -> Self {
        ThyroidSplit {
            healthy: vec!["3".into()],
            test_sick: 250,
            test_healthy: 250,
            seed: 0,
        }
    }
}

/// Splits rows into a healthy-only training set and a test set of
/// randomly chosen sick and healthy rows.
pub fn split_novelty(data: &LabeledDataset, split: &ThyroidSplit) -> Result<(LabeledDataset, Vec<TestPoint>)> {
    let is_healthy = |i: usize| split.healthy.iter().any(|h| h == data.class_name(data.label(i)));
    let mut healthy: Vec<usize> = (0..data.len()).filter(|&i| is_healthy(i)).collect();
    let mut sick: Vec<usize> = (0..data.len()).filter(|&i| !is_healthy(i)).collect();
    if sick.len() < split.test_sick {
        return Err(Error::data(format!(
            "{} sick rows available, {} requested for testing",
            sick.len(),
            split.test_sick
        )));
    }
    if healthy.len() <= split.test_healthy {
        return Err(Error::data(format!(
            "{} healthy rows cannot supply {} test rows and a training set",
            healthy.len(),
            split.test_healthy
        )));
    }
    let mut rng = substream(split.seed, "novelty-split", 0);
    healthy.shuffle(&mut rng);
    sick.shuffle(&mut rng);
    let (test_h, train_h) = healthy.split_at(split.test_healthy);
    let mut train_ids = train_h.to_vec();
    train_ids.sort_unstable();
    let train = LabeledDataset::single_class(train_ids.iter().map(|&i| data.point(i).to_vec()).collect(), "healthy")?;
    let test = test_h
        .iter()
        .map(|&i| (i, true))
        .chain(sick[..split.test_sick].iter().map(|&i| (i, false)))
        .map(|(i, is_known)| TestPoint {
            point: data.point(i).to_vec(),
            is_known,
        })
        .collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_rows() {
        let text = "T,2,8,3,5,1,8,13,0,6,6,10,8,0,8,0,8\nI,5,12,3,7,2,10,5,5,4,13,3,9,2,8,4,10\n";
        let d = read_letter(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 16);
        assert_eq!(d.class_name(d.label(0)), "T");
        assert_eq!(d.point(1)[0], 5.0);
        assert!(matches!(read_letter("A,1,2\n".as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn row_split() {
        let d = LabeledDataset::new(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], &["a", "b", "a", "b"]).unwrap();
        let (tr, te) = split_rows(&d, 2).unwrap();
        assert_eq!((tr.len(), te.len()), (2, 2));
        assert_eq!(te.class_name(te.label(0)), "a");
        assert_eq!(te.point(1), &[3.0]);
        assert!(split_rows(&d, 4).is_err());
    }

    fn thyroid_row(v: f64, class: &str) -> String {
        let mut f: Vec<String> = (0..21).map(|j| format!("{}", v + j as f64 * 0.01)).collect();
        f.push(class.into());
        f.join(" ") + "  \n"
    }

    #[test]
    fn thyroid_rows_both_separators() {
        let text = thyroid_row(0.1, "3") + "\n" + &thyroid_row(0.2, "1").replace(' ', ",");
        let d = read_thyroid(text.as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 21);
        assert_eq!(d.class_name(d.label(1)), "1");
        let bad = "1 2 3\n";
        assert!(read_thyroid(bad.as_bytes()).unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn novelty_split_counts() {
        let mut text = String::new();
        for i in 0..30 {
            text += &thyroid_row(i as f64, if i % 3 == 0 { "1" } else { "3.0" });
        }
        let d = read_thyroid(text.as_bytes()).unwrap();
        let split = ThyroidSplit {
            test_sick: 5,
            test_healthy: 5,
            ..Default::default()
        };
        let (train, test) = split_novelty(&d, &split).unwrap();
        assert_eq!(train.len(), 15);
        assert_eq!(test.len(), 10);
        assert_eq!(test.iter().filter(|t| t.is_known).count(), 5);
        assert_eq!(split_novelty(&d, &split).unwrap(), (train, test));
        let too_many = ThyroidSplit { test_sick: 11, ..split };
        assert!(split_novelty(&d, &too_many).is_err());
    }
}
