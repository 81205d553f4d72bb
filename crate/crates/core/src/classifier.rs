//! Common classifier interface and the per-class ensemble wrapper.

use crate::data::{Evidence, Label, LabeledDataset, Verdict};
use crate::error::{Error, Result};

/// Anything that can mark a point as known or unknown.
pub trait OpenSetClassifier: Send + Sync {
    fn dim(&self) -> usize;

    fn classify(&self, x: &[f64]) -> Result<Verdict>;
}

/// One model per training class. A point is unknown only if every member
/// marks it unknown; the reported score is the smallest member score.
#[derive(Debug, Clone)]
pub struct PerClass<M> {
    members: Vec<(String, M)>,
}

impl<M: OpenSetClassifier> PerClass<M> {
    /// Fits `fit` separately on the rows of each class.
    pub fn fit(data: &LabeledDataset, fit: impl Fn(&LabeledDataset) -> Result<M>) -> Result<Self> {
        let members = (0..data.num_classes())
            .map(|c| {
                let subset = data.filter_classes(|l| l == c).map_err(|e| {
                    Error::usage(format!("class '{}' cannot be fitted alone: {e}", data.class_name(c)))
                })?;
                Ok((data.class_name(c).to_string(), fit(&subset)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PerClass { members })
    }

    pub fn members(&self) -> &[(String, M)] {
        &self.members
    }
}

impl<M: OpenSetClassifier> OpenSetClassifier for PerClass<M> {
    fn dim(&self) -> usize {
        self.members[0].1.dim()
    }

    fn classify(&self, x: &[f64]) -> Result<Verdict> {
        let mut best: Option<(usize, Verdict)> = None;
        let mut any_known = false;
        for (i, (_, m)) in self.members.iter().enumerate() {
            let v = m.classify(x)?;
            any_known |= v.label == Label::Known;
            if best.as_ref().is_none_or(|(_, b)| v.score < b.score) {
                best = Some((i, v));
            }
        }
        let (member, v) = best.expect("per-class wrapper has at least one member");
        Ok(Verdict {
            label: if any_known { Label::Known } else { Label::Unknown },
            score: v.score,
            evidence: Evidence::PerClass {
                member,
                inner: Box::new(v.evidence),
            },
        })
    }
}
