//! Model file container.
//!
//! A model file is UTF-8 text: one header line
//! `openevt-model v<version> kind=<gpdc|gevc|evm>` followed by a JSON body
//! holding the training points, hyper-parameters and fitted state.
//! Non-finite floats in the body are written as the strings `"inf"`,
//! `"-inf"` and `"nan"`.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::OpenSetClassifier;
use crate::data::{DistanceMetric, LabeledDataset, Standardizer, Verdict};
use crate::error::{Error, Result};
use crate::evm::{EvmModel, MarginModel};
use crate::evt::ReversedWeibull;
use crate::gevc::{EndpointMode, GevcModel};
use crate::gpdc::{GpdcModel, JackknifeStat};

pub const MAGIC: &str = "openevt-model";
pub const FORMAT_VERSION: u32 = 1;

/// Serde adapter for `f64` fields that may hold infinities.
pub mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid float '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gpdc,
    Gevc,
    Evm,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Gpdc => "gpdc",
            ModelKind::Gevc => "gevc",
            ModelKind::Evm => "evm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gpdc" => Ok(ModelKind::Gpdc),
            "gevc" => Ok(ModelKind::Gevc),
            "evm" => Ok(ModelKind::Evm),
            other => Err(Error::usage(format!(
                "unknown method '{other}' (expected gpdc, gevc or evm)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Any of the three classifiers.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Gpdc(GpdcModel),
    Gevc(GevcModel),
    Evm(EvmModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Gpdc(_) => ModelKind::Gpdc,
            AnyModel::Gevc(_) => ModelKind::Gevc,
            AnyModel::Evm(_) => ModelKind::Evm,
        }
    }

    pub fn data(&self) -> &LabeledDataset {
        match self {
            AnyModel::Gpdc(m) => m.data(),
            AnyModel::Gevc(m) => m.data(),
            AnyModel::Evm(m) => m.data(),
        }
    }
}

impl OpenSetClassifier for AnyModel {
    fn dim(&self) -> usize {
        self.data().dim()
    }

    fn classify(&self, x: &[f64]) -> Result<Verdict> {
        match self {
            AnyModel::Gpdc(m) => m.classify(x),
            AnyModel::Gevc(m) => m.classify(x),
            AnyModel::Evm(m) => m.classify(x),
        }
    }
}

/// A model plus the feature preprocessing that must be applied to queries.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: AnyModel,
    pub standardizer: Option<Standardizer>,
}

impl ModelFile {
    pub fn new(model: AnyModel) -> Self {
        ModelFile {
            model,
            standardizer: None,
        }
    }

    /// Applies the stored preprocessing to a raw query.
    pub fn prepare(&self, x: &[f64]) -> Vec<f64> {
        match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Params {
    Gpdc {
        k: usize,
        gamma: Option<f64>,
        alpha: f64,
        #[serde(with = "extended_float")]
        s: f64,
        t: f64,
        per_point: Vec<Option<JackknifeStat>>,
    },
    Gevc {
        alpha: f64,
        endpoint: EndpointMode,
        fitted: ReversedWeibull,
    },
    Evm {
        k: usize,
        delta: Option<f64>,
        margins: Vec<MarginModel>,
    },
}

#[derive(Serialize, Deserialize)]
struct Body {
    metric: DistanceMetric,
    standardizer: Option<Standardizer>,
    data: LabeledDataset,
    params: Params,
}

pub fn write_model<W: Write>(mut w: W, file: &ModelFile) -> Result<()> {
    let (metric, params) = match &file.model {
        AnyModel::Gpdc(m) => {
            let c = m.calibration();
            (
                m.metric(),
                Params::Gpdc {
                    k: m.k(),
                    gamma: m.gamma(),
                    alpha: c.alpha,
                    s: c.s,
                    t: c.t,
                    per_point: c.per_point.clone(),
                },
            )
        }
        AnyModel::Gevc(m) => (
            m.metric(),
            Params::Gevc {
                alpha: m.alpha(),
                endpoint: m.endpoint_mode(),
                fitted: m.refresh()?,
            },
        ),
        AnyModel::Evm(m) => (
            m.metric(),
            Params::Evm {
                k: m.k(),
                delta: m.delta(),
                margins: m.margins().to_vec(),
            },
        ),
    };
    writeln!(w, "{MAGIC} v{FORMAT_VERSION} kind={}", file.model.kind())?;
    let body = Body {
        metric,
        standardizer: file.standardizer.clone(),
        data: file.model.data().clone(),
        params,
    };
    serde_json::to_writer(&mut w, &body).map_err(|e| Error::Model(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn parse_header(line: &str) -> Result<ModelKind> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(Error::Model("not an openevt model file".into()));
    }
    let version = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| Error::Model("missing format version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported format version {version} (this build reads v{FORMAT_VERSION})"
        )));
    }
    let kind = parts
        .next()
        .and_then(|k| k.strip_prefix("kind="))
        .ok_or_else(|| Error::Model("missing model kind".into()))?;
    ModelKind::parse(kind).map_err(|_| Error::Model(format!("unknown model kind '{kind}'")))
}

pub fn read_model<R: Read>(r: R) -> Result<ModelFile> {
    let mut reader = BufReader::new(r);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let kind = parse_header(&header)?;
    let body: Body =
        serde_json::from_reader(reader).map_err(|e| Error::Model(format!("invalid body: {e}")))?;
    let model = match body.params {
        Params::Gpdc {
            k,
            gamma,
            alpha,
            per_point,
            ..
        } if kind == ModelKind::Gpdc => AnyModel::Gpdc(GpdcModel::from_parts(
            body.data,
            body.metric,
            k,
            gamma,
            per_point,
            alpha,
        )?),
        Params::Gevc {
            alpha,
            endpoint,
            fitted,
        } if kind == ModelKind::Gevc => AnyModel::Gevc(GevcModel::from_parts(
            body.data,
            body.metric,
            alpha,
            endpoint,
            fitted,
        )?),
        Params::Evm { k, delta, margins } if kind == ModelKind::Evm => {
            AnyModel::Evm(EvmModel::from_parts(body.data, body.metric, k, delta, margins)?)
        }
        _ => return Err(Error::Model("header kind does not match the body".into())),
    };
    Ok(ModelFile {
        model,
        standardizer: body.standardizer,
    })
}

pub fn save(path: &Path, file: &ModelFile) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_model(&mut w, file)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelFile> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    read_model(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evm::EvmConfig;
    use crate::gevc::GevcConfig;
    use crate::gpdc::GpdcConfig;

    fn data() -> LabeledDataset {
        let pts: Vec<Vec<f64>> = (0..120)
            .map(|i| {
                let a = i as f64 * 0.7;
                let r = 1.0 + (i % 11) as f64 * 0.05;
                vec![r * a.cos() + if i % 2 == 0 { 0.0 } else { 5.0 }, r * a.sin()]
            })
            .collect();
        let labels: Vec<&str> = (0..120).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        LabeledDataset::new(pts, &labels).unwrap()
    }

    fn round_trip(file: &ModelFile) -> ModelFile {
        let mut buf = Vec::new();
        write_model(&mut buf, file).unwrap();
        read_model(buf.as_slice()).unwrap()
    }

    #[test]
    fn models_survive_round_trip() {
        let d = data();
        let probe = [0.3, 0.4];
        let gpdc = GpdcModel::fit(&d, &GpdcConfig { k: Some(10), ..Default::default() }).unwrap();
        let gevc = GevcModel::fit(&d, &GevcConfig::default()).unwrap();
        let evm = EvmModel::fit(&d, &EvmConfig { k: 10, delta: Some(0.5), ..Default::default() }).unwrap();
        for model in [AnyModel::Gpdc(gpdc), AnyModel::Gevc(gevc), AnyModel::Evm(evm)] {
            let file = ModelFile {
                model,
                standardizer: Some(Standardizer::fit(&d)),
            };
            let back = round_trip(&file);
            assert_eq!(back.model.kind(), file.model.kind());
            assert_eq!(back.model.data(), file.model.data());
            assert_eq!(back.standardizer, file.standardizer);
            assert_eq!(
                back.model.classify(&probe).unwrap(),
                file.model.classify(&probe).unwrap()
            );
        }
    }

    #[test]
    fn header_checks() {
        assert!(matches!(read_model("garbage\n{}".as_bytes()), Err(Error::Model(_))));
        assert!(matches!(
            read_model("openevt-model v9 kind=gpdc\n{}".as_bytes()),
            Err(Error::Model(m)) if m.contains("version")
        ));
        let d = data();
        let gevc = GevcModel::fit(&d, &GevcConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &ModelFile::new(AnyModel::Gevc(gevc))).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("kind=gevc", "kind=evm", 1);
        assert!(read_model(text.as_bytes()).is_err());
    }

    #[test]
    fn extended_float_handles_infinity() {
        #[derive(Serialize, Deserialize)]
        struct W(#[serde(with = "extended_float")] f64);
        let s = serde_json::to_string(&W(f64::NEG_INFINITY)).unwrap();
        assert_eq!(s, "\"-inf\"");
        assert_eq!(serde_json::from_str::<W>(&s).unwrap().0, f64::NEG_INFINITY);
        assert_eq!(serde_json::from_str::<W>("1.5").unwrap().0, 1.5);
    }
}
