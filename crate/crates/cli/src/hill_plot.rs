use std::io::Write;

use openevt::{hill_plot, negate_distances, read_csv_path, Error, NeighborIndex, Result};

use crate::settings::{output, Settings};
use crate::HillPlotArgs;

const KEYS: &[&str] = &["train", "query", "k-min", "k-max", "metric", "out", "label-column", "header", "delimiter"];

pub fn run(a: &HillPlotArgs) -> Result<()> {
    let mut flags = vec![
        ("train", a.train.clone()),
        ("query", a.query.clone()),
        ("k-min", a.k_min.clone()),
        ("k-max", a.k_max.clone()),
        ("metric", a.metric.clone()),
        ("out", a.out.clone()),
    ];
    flags.extend(a.csv.flags());
    let s = Settings::layered(a.config.as_deref(), flags, KEYS)?;

    let train = s.path("train").ok_or_else(|| Error::Usage("missing required setting 'train'".into()))?;
    let query: Vec<f64> = s
        .list("query")?
        .ok_or_else(|| Error::Usage("missing required setting 'query'".into()))?;
    let table = read_csv_path(&train, &s.csv_options()?)?;
    let dim = table.points.first().map_or(0, Vec::len);
    if dim != query.len() {
        return Err(Error::Data(format!(
            "query has {} coordinates but the training rows have {dim}",
            query.len()
        )));
    }
    let n = table.points.len();
    if n < 3 {
        return Err(Error::Data("need at least 3 training rows".into()));
    }
    let k_min = s.parse::<usize>("k-min")?.unwrap_or(1).max(1);
    let k_max = s.parse::<usize>("k-max")?.unwrap_or(n - 1).min(n - 1);
    if k_min > k_max {
        return Err(Error::Usage(format!("k-min {k_min} exceeds k-max {k_max}")));
    }
    let index = NeighborIndex::new(table.points.iter().map(Vec::as_slice), dim, s.metric()?)?;
    let nearest = index.k_smallest_distances(&query, k_max + 1)?;
    if nearest[0].distance == 0.0 {
        return Err(Error::Data("query coincides with a training row; the shape is undefined".into()));
    }
    // Only the k_max + 1 largest negated distances enter any estimate.
    let dists: Vec<f64> = nearest.iter().map(|x| x.distance).collect();
    let curve = hill_plot(&negate_distances(&dists), k_min..=k_max)?;

    let mut w = output(s.path("out").as_deref())?;
    s.echo(&mut w)?;
    writeln!(w, "k,xi_hat,p_xi_hat")?;
    for (k, xi) in curve {
        writeln!(w, "{k},{xi},{}", xi * dim as f64)?;
    }
    w.flush()?;
    Ok(())
}
