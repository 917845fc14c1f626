use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Writes the artifacts of one command into the output directory.
pub struct Outputs {
    dir: PathBuf,
    command: &'static str,
    written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

/// One numeric series of a plot-data file.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

#[derive(Serialize)]
struct Envelope<'a, S> {
    metadata: Metadata<'a>,
    summary: &'a S,
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
}

impl Outputs {
    pub fn new(dir: &Path, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), command, written: Vec::new() })
    }

    fn path(&self, ext: &str) -> PathBuf {
        self.dir.join(format!("{}.{ext}", self.command))
    }

    pub fn json<S: Serialize>(&mut self, summary: &S) -> Result<(), CliError> {
        let env = Envelope {
            metadata: Metadata { tool: "dualitylab", version: env!("CARGO_PKG_VERSION"), command: self.command },
            summary,
        };
        let path = self.path("json");
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| io_err(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.path("csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    /// Two-column text blocks, one per series, separated by two blank lines
    /// so that gnuplot can address them with `index`.
    pub fn plot(&mut self, series: &[Series]) -> Result<(), CliError> {
        let path = self.path("dat");
        let mut buf = Vec::new();
        for (i, s) in series.iter().enumerate() {
            if i > 0 {
                buf.extend_from_slice(b"\n\n");
            }
            writeln!(buf, "# {}", s.name).expect("in-memory write");
            for (x, y) in &s.points {
                writeln!(buf, "{x} {y}").expect("in-memory write");
            }
        }
        fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}
