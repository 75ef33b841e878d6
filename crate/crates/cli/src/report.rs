//! Certificates, summary JSON and artifact files.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub name: String,
    pub value: f64,
    /// `value <= bound` passes unless `lower` is set, then `value >= bound`.
    pub bound: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub lower: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub subcommand: String,
    pub schema_version: u32,
    pub fingerprint: String,
    pub model: String,
    pub certificates: Vec<Certificate>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub data: serde_json::Value,
}

impl Summary {
    pub fn new(subcommand: &str, fingerprint: String, model: String) -> Self {
        Self {
            subcommand: subcommand.into(),
            schema_version: crate::config::SCHEMA_VERSION,
            fingerprint,
            model,
            certificates: Vec::new(),
            warnings: Vec::new(),
            artifacts: Vec::new(),
            data: serde_json::Value::Object(Default::default()),
        }
    }

    pub fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        let passed = value <= bound;
        self.certificates.push(Certificate { name: name.into(), value, bound, lower: false, passed });
    }

    pub fn at_least(&mut self, name: &str, value: f64, bound: f64) {
        let passed = value >= bound;
        self.certificates.push(Certificate { name: name.into(), value, bound, lower: true, passed });
    }

    pub fn check(&mut self, name: &str, ok: bool) {
        let v = if ok { 1.0 } else { 0.0 };
        self.certificates.push(Certificate { name: name.into(), value: v, bound: 1.0, lower: true, passed: ok });
    }

    pub fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        if let serde_json::Value::Object(m) = &mut self.data {
            m.insert(key.into(), serde_json::to_value(value).expect("serializable"));
        }
    }

    pub fn failed(&self) -> Vec<&Certificate> {
        self.certificates.iter().filter(|c| !c.passed).collect()
    }
}

/// Output directory that records what it writes.
pub struct Artifacts {
    pub dir: PathBuf,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        self.written.push(name.into());
        Ok(())
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> std::io::Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    pub fn text(&mut self, name: &str, text: &str) -> std::io::Result<()> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }
}

/// Compare certificate values with a frozen reference, or write it when blessing.
pub fn regression(summary: &mut Summary, path: &Path, bless: bool) -> std::io::Result<()> {
    let values: Vec<(String, f64)> = summary.certificates.iter().map(|c| (c.name.clone(), c.value)).collect();
    if bless {
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &values)?;
        writeln!(w)?;
        return Ok(());
    }
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(());
    };
    let reference: Vec<(String, f64)> = match serde_json::from_str(&text) {
        Ok(r) => r,
        Err(e) => {
            summary.warn(format!("unreadable reference {}: {e}", path.display()));
            return Ok(());
        }
    };
    for (name, want) in reference {
        let got = values.iter().find(|(n, _)| *n == name).map_or(f64::INFINITY, |v| v.1);
        let label = format!("regression {name}");
        if want.abs() < 1e-8 {
            // round-off level values only need to stay at round-off level
            summary.at_most(&label, got.abs(), 1e-8);
        } else {
            summary.at_most(&label, (got - want).abs() / want.abs(), 1e-6);
        }
    }
    Ok(())
}
