//! Plot-ready CSV output.

use std::io::Write;

use crate::error::Result;
use crate::eval::metrics::RocCurve;
use crate::eval::protocols::{MethodOutcome, NoveltyResult, OpennessStep, ToyResult, XiRecord};

/// One line of a metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub protocol: String,
    pub method: String,
    pub step: String,
    pub metric: String,
    /// Empty cell when absent.
    pub value: Option<f64>,
}

impl MetricRow {
    fn new(protocol: &str, method: &str, step: impl Into<String>, metric: &str, value: Option<f64>) -> Self {
        MetricRow {
            protocol: protocol.into(),
            method: method.into(),
            step: step.into(),
            metric: metric.into(),
            value,
        }
    }
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["protocol", "method", "step", "metric", "value"])?;
    for r in rows {
        let value = r.value.map(|v| v.to_string()).unwrap_or_default();
        out.write_record([&r.protocol, &r.method, &r.step, &r.metric, &value])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_roc<W: Write>(w: W, roc: &RocCurve) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["fpr", "tpr"])?;
    for (x, y) in &roc.points {
        out.write_record([x.to_string(), y.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Test coordinates, ground truth and shape estimate per row.
pub fn write_xi<W: Write>(w: W, records: &[XiRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let dim = records.first().map_or(0, |r| r.point.len());
    let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
    header.extend(["is_known".into(), "xi_hat".into()]);
    out.write_record(&header)?;
    for r in records {
        let mut row: Vec<String> = r.point.iter().map(f64::to_string).collect();
        row.push(r.is_known.to_string());
        row.push(r.xi_hat.map(|v| v.to_string()).unwrap_or_default());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn toy_rows(results: &[ToyResult]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for r in results {
        for (m, roc) in [("evm", &r.evm), ("gpdc", &r.gpdc), ("gevc", &r.gevc)] {
            rows.push(MetricRow::new("toy", m, format!("seed={}", r.seed), "auc", Some(roc.auc)));
        }
    }
    rows
}

pub fn oletter_rows(steps: &[OpennessStep]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for s in steps {
        for c in &s.curves {
            for p in &c.points {
                rows.push(MetricRow::new(
                    "oletter",
                    c.method.as_str(),
                    format!("rep={};unknown={};threshold={}", s.rep, s.unknown.len(), p.threshold),
                    "f_measure",
                    p.f_measure,
                ));
            }
        }
    }
    rows
}

pub fn novelty_rows(protocol: &str, res: &NoveltyResult) -> Vec<MetricRow> {
    let mut rows: Vec<MetricRow> = res
        .gpdc
        .iter()
        .map(|p| MetricRow::new(protocol, "gpdc", format!("tail_fraction={};k={}", p.fraction, p.k), "auc", Some(p.roc.auc)))
        .collect();
    for (m, o) in [("gevc", &res.gevc), ("evm", &res.evm)] {
        let step = match o {
            MethodOutcome::Roc(_) => "all",
            MethodOutcome::Unsupported(_) => "unsupported",
        };
        rows.push(MetricRow::new(protocol, m, step, "auc", o.auc()));
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_csv_layout() {
        let rows = vec![
            MetricRow::new("toy", "gpdc", "seed=1", "auc", Some(0.5)),
            MetricRow::new("oletter", "evm", "rep=0;unknown=0", "f_measure", None),
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "protocol,method,step,metric,value\ntoy,gpdc,seed=1,auc,0.5\noletter,evm,rep=0;unknown=0,f_measure,\n"
        );
    }

    #[test]
    fn roc_csv() {
        let roc = RocCurve { points: vec![(0.0, 0.0), (1.0, 1.0)], auc: 0.5 };
        let mut buf = Vec::new();
        write_roc(&mut buf, &roc).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fpr,tpr\n0,0\n1,1\n");
    }
}
