use std::io::Write;

use openevt::model_io::{load, AnyModel};
use openevt::{read_csv_path, Error, Evidence, OpenSetClassifier, Result, Verdict};
use rayon::prelude::*;

use crate::settings::{output, Settings};
use crate::ScoreArgs;

const KEYS: &[&str] = &["model", "test", "out", "alpha", "delta", "label-column", "header", "delimiter"];

const COLUMNS: &str = "row_id,verdict,score,stage,xi_hat,p_xi,radius,d0_min,psi";

pub fn run(a: &ScoreArgs) -> Result<()> {
    let mut flags = vec![
        ("model", a.model.clone()),
        ("test", a.test.clone()),
        ("out", a.out.clone()),
        ("alpha", a.alpha.clone()),
        ("delta", a.delta.clone()),
    ];
    flags.extend(a.csv.flags());
    let s = Settings::layered(a.config.as_deref(), flags, KEYS)?;

    let model_path = s.path("model").ok_or_else(|| Error::Usage("missing required setting 'model'".into()))?;
    let test_path = s.path("test").ok_or_else(|| Error::Usage("missing required setting 'test'".into()))?;
    let mut file = load(&model_path)?;
    if let Some(alpha) = s.parse::<f64>("alpha")? {
        file.model = match file.model {
            AnyModel::Gpdc(m) => AnyModel::Gpdc(m.recalibrate(alpha)?),
            AnyModel::Gevc(m) => AnyModel::Gevc(m.with_alpha(alpha)?),
            AnyModel::Evm(_) => return Err(Error::Usage("alpha does not apply to evm models; use delta".into())),
        };
    }
    if let Some(delta) = s.parse::<f64>("delta")? {
        match &mut file.model {
            AnyModel::Evm(m) => m.set_delta(Some(delta))?,
            _ => return Err(Error::Usage("delta applies only to evm models".into())),
        }
    }
    if let AnyModel::Evm(m) = &file.model {
        if m.delta().is_none() {
            return Err(Error::Usage("evm scoring needs a delta (none stored in the model)".into()));
        }
    }

    let table = read_csv_path(&test_path, &s.csv_options()?)?;
    let dim = file.model.dim();
    if let Some(row) = table.points.iter().position(|p| p.len() != dim) {
        return Err(Error::Data(format!(
            "test row {} has {} features but the model expects {dim}",
            row + 1,
            table.points[row].len()
        )));
    }
    let verdicts = table
        .points
        .par_iter()
        .map(|x| file.model.classify(&file.prepare(x)))
        .collect::<Result<Vec<_>>>()?;

    let out_path = s.path("out");
    let mut w = output(out_path.as_deref())?;
    if verdicts.is_empty() {
        w.flush()?;
        return Ok(());
    }
    s.echo(&mut w)?;
    writeln!(w, "# kind={}", file.model.kind())?;
    writeln!(w, "{COLUMNS}")?;
    for (i, v) in verdicts.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", v.label, v.score, evidence_fields(v))?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `stage,xi_hat,p_xi,radius,d0_min,psi`, blank where not applicable.
fn evidence_fields(v: &Verdict) -> String {
    fn fields(e: &Evidence) -> [String; 6] {
        match e {
            Evidence::Gpdc(g) => [
                g.stage.to_string(),
                opt(g.xi_hat),
                opt(g.p_xi),
                opt(g.radius),
                String::new(),
                String::new(),
            ],
            Evidence::Gevc { d0_min } => {
                [String::new(), String::new(), String::new(), String::new(), d0_min.to_string(), String::new()]
            }
            Evidence::Evm { psi } => {
                [String::new(), String::new(), String::new(), String::new(), String::new(), psi.to_string()]
            }
            Evidence::PerClass { inner, .. } => fields(inner),
        }
    }
    fields(&v.evidence).join(",")
}
