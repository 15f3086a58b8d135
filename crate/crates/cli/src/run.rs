//! Run directory, CSV output and the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{Config, FieldError};

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input; exit code 1.
    Validation(String),
    /// A numerical guard tripped (overflow, non-contraction, blow-up); exit code 2.
    Numerical(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation: {m}"),
            Failure::Numerical(m) => write!(f, "numerical guard: {m}"),
        }
    }
}

impl From<phasekin::Error> for Failure {
    fn from(e: phasekin::Error) -> Self {
        use phasekin::Error as E;
        match e {
            E::Overflow { .. } | E::NonContraction { .. } | E::BlowUp { .. } | E::MemoryGuard(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<FieldError> for Failure {
    fn from(e: FieldError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(format!("io: {e}"))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation(format!("csv: {e}"))
    }
}

pub struct Run {
    pub dir: PathBuf,
    entries: Vec<(String, String)>,
    start: Instant,
}

/// Shortest round-trip decimal; identical bits give identical text.
pub fn num(x: f64) -> String {
    // normalise the sign of zero so that equal values print equally
    format!("{:e}", if x == 0.0 { 0.0 } else { x })
}

impl Run {
    pub fn create(out: &Path, command: &str, cfg: &Config, seed: u64, threads: usize) -> std::io::Result<Run> {
        let hash = cfg.hash(command, seed);
        let dir = out.join(format!("{command}-{}", &hash[..16]));
        fs::create_dir_all(&dir)?;
        let mut r = Run { dir, entries: Vec::new(), start: Instant::now() };
        r.record("command", command);
        r.record("config_hash", hash);
        r.record("seed", seed);
        r.record("threads", threads);
        // core and cli share the workspace version
        r.record("version", env!("CARGO_PKG_VERSION"));
        Ok(r)
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn finish(&mut self, cfg: &Config) -> std::io::Result<()> {
        let wall = self.start.elapsed().as_secs_f64();
        self.record("wall_time_s", format!("{wall:.3}"));
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str("\n# configuration (canonical)\n");
        for line in cfg.canonical().lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        fs::write(self.path("manifest.txt"), s)
    }
}
