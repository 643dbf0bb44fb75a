//! File writers shared by the subcommands.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult, Context};

/// The output directory must already exist.
pub fn out_dir(dir: &Path) -> CliResult<&Path> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("output directory `{}` does not exist", dir.display())));
    }
    Ok(dir)
}

pub fn write_json<T: Serialize>(path: PathBuf, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).context(format!("serializing {}", path.display()))?;
    std::fs::write(&path, text + "\n").context(format!("writing {}", path.display()))
}

pub fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).context(format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

/// Writes a header and rows of already formatted cells.
pub fn write_csv(path: PathBuf, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Core {
        context: format!("writing {}", path.display()),
        source: magmaclust::Error::Io(std::io::Error::other(e.to_string())),
    };
    let mut w = csv_writer(&path)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().context(format!("writing {}", path.display()))
}

/// Shortest round-tripping text, switching to exponent notation for very
/// small or large magnitudes.
pub trait Num {
    fn num(&self) -> String;
}

impl Num for f64 {
    fn num(&self) -> String {
        format!("{self:?}")
    }
}

/// Aligned plain-text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out.push('\n');
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
