use std::io::Write;
use std::path::{Path, PathBuf};

use openevt::eval::report::{novelty_rows, oletter_rows, toy_rows, write_metrics, write_roc, write_xi, MetricRow};
use openevt::eval::{
    generate_toy, load_letter, load_thyroid, run_binary_novelty, run_oletter, run_toy, split_novelty, split_rows,
    surrogate_classes, GaussianSpec, MethodOutcome, NoveltyConfig, OletterConfig, RocCurve, ThyroidSplit, ToyConfig,
    ToyParams, LETTER_TRAIN_ROWS,
};
use openevt::{Error, Result};

use crate::settings::{output, Settings};
use crate::BenchmarkArgs;

const KEYS: &[&str] = &[
    "protocol", "seed", "data", "out", "roc-dir", "emit-xi", "seeds", "reps", "gpdc-tail-fractions", "k-gpdc",
    "k-evm", "healthy",
];

pub fn run(a: &BenchmarkArgs) -> Result<()> {
    let flags = vec![
        ("protocol", a.protocol.clone()),
        ("seed", a.seed.clone()),
        ("data", a.data.clone()),
        ("out", a.out.clone()),
        ("roc-dir", a.roc_dir.clone()),
        ("emit-xi", a.emit_xi.then(|| "true".into())),
        ("seeds", a.seeds.clone()),
        ("reps", a.reps.clone()),
        ("gpdc-tail-fractions", a.gpdc_tail_fractions.clone()),
        ("k-gpdc", a.k_gpdc.clone()),
        ("k-evm", a.k_evm.clone()),
        ("healthy", a.healthy.clone()),
    ];
    let s = Settings::layered(a.config.as_deref(), flags, KEYS)?;
    let seed = s.parse::<u64>("seed")?.unwrap_or(0);
    let roc_dir = s.path("roc-dir");
    if let Some(d) = &roc_dir {
        std::fs::create_dir_all(d)?;
    }

    let protocol = s.require("protocol")?.to_string();
    let (rows, summary) = match protocol.as_str() {
        "toy" => toy(&s, seed, roc_dir.as_deref())?,
        "oletter" => oletter(&s, seed)?,
        "thyroid" => thyroid(&s, seed, roc_dir.as_deref())?,
        other => {
            return Err(Error::Usage(format!(
                "unknown protocol '{other}' (expected toy, oletter or thyroid)"
            )))
        }
    };

    let out = s.path("out");
    if let Some(rows) = rows {
        let mut w = output(out.as_deref())?;
        s.echo(&mut w)?;
        write_metrics(&mut w, &rows)?;
        w.flush()?;
    }
    // The summary goes to stdout unless stdout already carries the CSV.
    let mut log: Box<dyn Write> = if out.is_some() {
        Box::new(std::io::stdout().lock())
    } else {
        Box::new(std::io::stderr().lock())
    };
    for (k, v) in summary {
        writeln!(log, "{k}={v}")?;
    }
    Ok(())
}

type Outcome = (Option<Vec<MetricRow>>, Vec<(String, String)>);

fn save_roc(dir: Option<&Path>, name: &str, roc: &RocCurve) -> Result<()> {
    if let Some(d) = dir {
        let path: PathBuf = d.join(format!("{name}.csv"));
        let mut w = output(Some(&path))?;
        write_roc(&mut w, roc)?;
        w.flush()?;
    }
    Ok(())
}

fn toy(s: &Settings, seed: u64, roc_dir: Option<&Path>) -> Result<Outcome> {
    let n_seeds = s.parse::<u64>("seeds")?.unwrap_or(1);
    if n_seeds == 0 {
        return Err(Error::Usage("seeds must be at least 1".into()));
    }
    let params = ToyParams {
        k_gpdc: s.parse("k-gpdc")?,
        k_evm: s.parse("k-evm")?.unwrap_or(ToyParams::default().k_evm),
    };
    let results = (seed..seed + n_seeds)
        .map(|sd| run_toy(&ToyConfig::reference(sd), &params))
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        for (m, roc) in [("evm", &r.evm), ("gpdc", &r.gpdc), ("gevc", &r.gevc)] {
            save_roc(roc_dir, &format!("roc_toy_{m}_seed{}", r.seed), roc)?;
        }
    }
    let n = results.len() as f64;
    let mean = |f: fn(&openevt::eval::ToyResult) -> f64| (results.iter().map(f).sum::<f64>() / n).to_string();
    let summary = vec![
        ("protocol".into(), "toy".into()),
        ("seeds".into(), n_seeds.to_string()),
        ("auc_evm".into(), mean(|r| r.evm.auc)),
        ("auc_gpdc".into(), mean(|r| r.gpdc.auc)),
        ("auc_gevc".into(), mean(|r| r.gevc.auc)),
    ];
    if s.flag("emit-xi")? {
        let mut w = output(s.path("out").as_deref())?;
        s.echo(&mut w)?;
        write_xi(&mut w, &results[0].xi)?;
        w.flush()?;
        return Ok((None, summary));
    }
    Ok((Some(toy_rows(&results)), summary))
}

fn oletter(s: &Settings, seed: u64) -> Result<Outcome> {
    let (train, test, mut cfg) = match s.path("data") {
        Some(p) => {
            let (train, test) = split_rows(&load_letter(&p)?, LETTER_TRAIN_ROWS)?;
            (train, test, OletterConfig::letter(seed))
        }
        None => {
            let (train, test) = surrogate_classes(8, 4, 150, 50, seed)?;
            (train, test, OletterConfig::surrogate(seed))
        }
    };
    if let Some(r) = s.parse("reps")? {
        cfg.reps = r;
    }
    if let Some(k) = s.parse("k-gpdc")? {
        cfg.k_gpdc = k;
    }
    if let Some(k) = s.parse("k-evm")? {
        cfg.k_evm = k;
    }
    let steps = run_oletter(&train, &test, &cfg)?;
    let mut summary = vec![
        ("protocol".to_string(), "oletter".to_string()),
        ("reps".into(), cfg.reps.to_string()),
        ("known".into(), cfg.n_known.to_string()),
    ];
    // Best F-measure over the threshold grid at the most open step, averaged
    // over repetitions.
    let last = steps.iter().map(|st| st.unknown.len()).max().unwrap_or(0);
    for m in &cfg.methods {
        let best: Vec<f64> = steps
            .iter()
            .filter(|st| st.unknown.len() == last)
            .filter_map(|st| st.curves.iter().find(|c| c.method == *m))
            .filter_map(|c| c.points.iter().filter_map(|p| p.f_measure).reduce(f64::max))
            .collect();
        if !best.is_empty() {
            let mean = best.iter().sum::<f64>() / best.len() as f64;
            summary.push((format!("best_f_{m}_unknown{last}"), mean.to_string()));
        }
    }
    Ok((Some(oletter_rows(&steps)), summary))
}

fn thyroid(s: &Settings, seed: u64, roc_dir: Option<&Path>) -> Result<Outcome> {
    let (train, test) = match s.path("data") {
        Some(p) => {
            let mut split = ThyroidSplit {
                seed,
                ..Default::default()
            };
            if let Some(h) = s.list::<String>("healthy")? {
                split.healthy = h;
            }
            split_novelty(&load_thyroid(&p)?, &split)?
        }
        None => {
            // Synthetic stand-in: healthy blob, sick blob shifted along one axis.
            let dim = 5;
            let mut sick = vec![0.0; dim];
            sick[0] = 3.5;
            generate_toy(&ToyConfig {
                known: vec![("healthy".into(), GaussianSpec::isotropic(vec![0.0; dim], 1.0, 2000, 250))],
                unknown: GaussianSpec::isotropic(sick, 1.0, 0, 250),
                seed,
            })?
        }
    };
    let mut cfg = NoveltyConfig::default();
    if let Some(f) = s.list::<f64>("gpdc-tail-fractions")? {
        cfg.tail_fractions = f;
    }
    if let Some(k) = s.parse("k-evm")? {
        cfg.k_evm = k;
    }
    let res = run_binary_novelty(&train, &test, &cfg)?;
    let mut summary = vec![
        ("protocol".to_string(), "thyroid".to_string()),
        ("n_train".into(), train.len().to_string()),
        ("n_test".into(), test.len().to_string()),
    ];
    for p in &res.gpdc {
        summary.push((format!("auc_gpdc_k{}", p.k), p.roc.auc.to_string()));
        save_roc(roc_dir, &format!("roc_thyroid_gpdc_k{}", p.k), &p.roc)?;
    }
    for (m, o) in [("gevc", &res.gevc), ("evm", &res.evm)] {
        match o {
            MethodOutcome::Roc(r) => {
                summary.push((format!("auc_{m}"), r.auc.to_string()));
                save_roc(roc_dir, &format!("roc_thyroid_{m}"), r)?;
            }
            MethodOutcome::Unsupported(why) => summary.push((format!("auc_{m}"), format!("unsupported ({why})"))),
        }
    }
    Ok((Some(novelty_rows("thyroid", &res)), summary))
}
