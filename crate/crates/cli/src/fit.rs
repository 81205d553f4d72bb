use std::io::Write;

use openevt::eval::k_for_fraction;
use openevt::model_io::{save, AnyModel, ModelFile};
use openevt::{
    read_csv_path, EndpointMode, Error, EvmConfig, EvmModel, GevcConfig, GevcModel, GpdcConfig, GpdcModel, ModelKind,
    Result, Standardizer,
};

use crate::settings::{output, Settings};
use crate::FitArgs;

const KEYS: &[&str] = &[
    "method", "train", "out", "alpha", "k", "tail-fraction", "gamma", "delta", "endpoint", "metric", "standardize",
    "label-column", "header", "delimiter",
];

pub fn run(a: &FitArgs) -> Result<()> {
    let mut flags = vec![
        ("method", a.method.clone()),
        ("train", a.train.clone()),
        ("out", a.out.clone()),
        ("alpha", a.alpha.clone()),
        ("k", a.k.clone()),
        ("tail-fraction", a.tail_fraction.clone()),
        ("gamma", a.gamma.clone()),
        ("delta", a.delta.clone()),
        ("endpoint", a.endpoint.clone()),
        ("metric", a.metric.clone()),
        ("standardize", a.standardize.then(|| "true".into())),
    ];
    flags.extend(a.csv.flags());
    let s = Settings::layered(a.config.as_deref(), flags, KEYS)?;

    let method = ModelKind::parse(s.require("method")?)?;
    let train_path = s.path("train").ok_or_else(|| Error::Usage("missing required setting 'train'".into()))?;
    let out_path = s.path("out").ok_or_else(|| Error::Usage("missing required setting 'out'".into()))?;
    let raw = read_csv_path(&train_path, &s.csv_options()?)?.into_dataset()?;
    if raw.is_empty() {
        return Err(Error::Data(format!("{} has no rows", train_path.display())));
    }
    let standardizer = s.flag("standardize")?.then(|| Standardizer::fit(&raw));
    let data = match &standardizer {
        Some(st) => st.apply_dataset(&raw)?,
        None => raw,
    };
    let metric = s.metric()?;
    let alpha = s.parse::<f64>("alpha")?;

    let mut summary: Vec<(&str, String)> = vec![
        ("method", method.to_string()),
        ("n", data.len().to_string()),
        ("p", data.dim().to_string()),
        ("classes", data.num_classes().to_string()),
    ];
    let model = match method {
        ModelKind::Gpdc => {
            let k = match (s.parse::<usize>("k")?, s.parse::<f64>("tail-fraction")?) {
                (Some(_), Some(_)) => return Err(Error::Usage("give either k or tail-fraction, not both".into())),
                (Some(k), None) => Some(k),
                (None, Some(f)) => Some(k_for_fraction(f, data.len())?),
                (None, None) => None,
            };
            let cfg = GpdcConfig {
                k,
                gamma: s.parse("gamma")?,
                alpha: alpha.unwrap_or(0.05),
                metric,
            };
            let m = GpdcModel::fit(&data, &cfg)?;
            let c = m.calibration();
            summary.extend([
                ("k", m.k().to_string()),
                ("gamma", m.gamma().map_or("1/n".into(), |g| g.to_string())),
                ("alpha", c.alpha.to_string()),
                ("s", c.s.to_string()),
                ("t", c.t.to_string()),
                ("training_flag_rate", c.self_flag_rate().to_string()),
            ]);
            AnyModel::Gpdc(m)
        }
        ModelKind::Gevc => {
            let endpoint = match s.get("endpoint") {
                None | Some("zero") => EndpointMode::Zero,
                Some("estimated") => EndpointMode::Estimated,
                Some(v) => return Err(Error::Usage(format!("endpoint must be zero or estimated, got '{v}'"))),
            };
            let cfg = GevcConfig {
                alpha: alpha.unwrap_or(0.05),
                metric,
                endpoint,
            };
            let m = GevcModel::fit(&data, &cfg)?;
            let w = m.fitted();
            summary.extend([
                ("alpha", m.alpha().to_string()),
                ("weibull_sigma", w.sigma.to_string()),
                ("weibull_shape", w.alpha.to_string()),
                ("weibull_endpoint", w.endpoint.to_string()),
                ("excluded_duplicates", m.excluded_duplicates().to_string()),
            ]);
            AnyModel::Gevc(m)
        }
        ModelKind::Evm => {
            let cfg = EvmConfig {
                k: s.parse("k")?.unwrap_or(EvmConfig::default().k),
                metric,
                delta: s.parse("delta")?,
            };
            let m = EvmModel::fit(&data, &cfg)?;
            summary.extend([
                ("k", m.k().to_string()),
                ("delta", m.delta().map_or("unset".into(), |d| d.to_string())),
            ]);
            AnyModel::Evm(m)
        }
    };
    save(&out_path, &ModelFile { model, standardizer })?;
    summary.push(("model", out_path.display().to_string()));

    let mut w = output(None)?;
    s.echo(&mut w)?;
    for (k, v) in summary {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}
