//! CSV and JSON writers. Every artifact starts with the crate version and the
//! resolved spec so a file alone is enough to rerun it.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use spikefield_core::{Error, Result};

use crate::spec::ExperimentSpec;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    match out {
        Some(p) => Ok(Box::new(io::BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn spec_json(spec: &ExperimentSpec) -> String {
    serde_json::to_string(spec).expect("spec serializes")
}

pub fn write_csv(out: Option<&Path>, spec: &ExperimentSpec, notes: &[String], table: &Table) -> Result<()> {
    let label = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = sink(out)?;
    writeln!(w, "# spikefield {VERSION}").map_err(|e| io_err(&label, e))?;
    writeln!(w, "# spec {}", spec_json(spec)).map_err(|e| io_err(&label, e))?;
    for note in notes {
        writeln!(w, "# note {note}").map_err(|e| io_err(&label, e))?;
    }
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    csv.write_record(&table.header).map_err(|e| io_err(&label, e))?;
    for row in &table.rows {
        csv.write_record(row).map_err(|e| io_err(&label, e))?;
    }
    csv.flush().map_err(|e| io_err(&label, e))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    spec: &'a ExperimentSpec,
    result: &'a T,
}

fn json_text<T: Serialize>(spec: &ExperimentSpec, result: &T) -> String {
    let env = Envelope {
        version: VERSION,
        spec,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("result serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(out: Option<&Path>, spec: &ExperimentSpec, result: &T) -> Result<()> {
    let label = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = sink(out)?;
    w.write_all(json_text(spec, result).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| io_err(&label, e))
}

/// Next to `<out>` as `<out>.summary.json`, or on stderr without `--out`.
pub fn write_summary<T: Serialize>(out: Option<&Path>, spec: &ExperimentSpec, summary: &T) -> Result<()> {
    let text = json_text(spec, summary);
    match out {
        Some(p) => {
            let mut name = p.as_os_str().to_owned();
            name.push(".summary.json");
            let path = PathBuf::from(name);
            std::fs::write(&path, text).map_err(|e| io_err(&path, e))
        }
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 2.5e17, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }
}
