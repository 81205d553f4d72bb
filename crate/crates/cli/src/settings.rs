//! Run settings: a plain `key=value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use openevt::{CsvOptions, DistanceMetric, Error, LabelColumn, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

impl Settings {
    /// Reads `config` (if any), then applies every flag that was given.
    /// Keys outside `allowed` are rejected so typos do not pass silently.
    pub fn layered(config: Option<&Path>, flags: Vec<(&str, Option<String>)>, allowed: &[&str]) -> Result<Self> {
        let mut values = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
                _ => Error::Io(e),
            })?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
                values.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        if let Some(bad) = values.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(usage(format!("unknown setting '{bad}' (allowed: {})", allowed.join(", "))));
        }
        Ok(Settings { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| usage(format!("missing required setting '{key}'")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| usage(format!("invalid value '{v}' for '{key}'"))))
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(usage(format!("invalid boolean '{v}' for '{key}'"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<T>()
                            .map_err(|_| usage(format!("invalid list entry '{s}' for '{key}'")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn metric(&self) -> Result<DistanceMetric> {
        self.get("metric").map_or(Ok(DistanceMetric::Euclidean), DistanceMetric::parse)
    }

    pub fn csv_options(&self) -> Result<CsvOptions> {
        let label_column = match self.get("label-column") {
            None | Some("last") => LabelColumn::Last,
            Some("first") => LabelColumn::First,
            Some("none") => LabelColumn::None,
            Some(v) => return Err(usage(format!("label-column must be first, last or none, got '{v}'"))),
        };
        let delimiter = match self.get("delimiter") {
            None => b',',
            Some("tab" | "\\t") => b'\t',
            Some(d) if d.len() == 1 => d.as_bytes()[0],
            Some(d) => return Err(usage(format!("delimiter must be one byte, got '{d}'"))),
        };
        Ok(CsvOptions {
            label_column,
            has_header: self.flag("header")?,
            delimiter,
        })
    }

    /// Writes every setting as a `# key=value` comment line.
    pub fn echo(&self, w: &mut dyn Write) -> std::io::Result<()> {
        for (k, v) in &self.values {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }
}

/// Buffered writer to `path`, or stdout when absent.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\nalpha = 0.1\nmethod=gpdc\nlabel_column=first\n").unwrap();
        let s = Settings::layered(
            Some(&path),
            vec![("alpha", Some("0.2".into())), ("k", None)],
            &["alpha", "method", "k", "label-column"],
        )
        .unwrap();
        assert_eq!(s.parse::<f64>("alpha").unwrap(), Some(0.2));
        assert_eq!(s.get("method"), Some("gpdc"));
        assert_eq!(s.get("k"), None);
        assert_eq!(s.csv_options().unwrap().label_column, LabelColumn::First);
        let mut buf = Vec::new();
        s.echo(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# alpha=0.2\n# label-column=first\n# method=gpdc\n");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let s = Settings::layered(None, vec![("alpha", Some("x".into()))], &["alpha"]).unwrap();
        assert!(s.parse::<f64>("alpha").is_err());
        assert!(Settings::layered(None, vec![("beta", Some("1".into()))], &["alpha"]).is_err());
        let s = Settings::layered(None, vec![("f", Some("0.1, 0.2".into()))], &["f"]).unwrap();
        assert_eq!(s.list::<f64>("f").unwrap(), Some(vec![0.1, 0.2]));
    }
}
