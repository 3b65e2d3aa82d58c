use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bosonkit::linopt::{unitarity_defect, MatrixFile};
use bosonkit::CMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes to `out` when given, otherwise to standard output.
pub fn emit(out: Option<&PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn read_matrix(path: &Path) -> CliResult<CMatrix> {
    let file: MatrixFile = read_json(path)?;
    Ok(file.to_matrix()?)
}

/// A square matrix that is unitary to `1e-10`.
pub fn read_unitary(path: &Path) -> CliResult<CMatrix> {
    let u = read_matrix(path)?;
    if u.nrows() != u.ncols() {
        return Err(CliError::Input(format!("{}: unitary must be square", path.display())));
    }
    let defect = unitarity_defect(&u);
    if defect > 1e-10 {
        return Err(CliError::Input(format!("{}: not unitary (defect {defect:.2e})", path.display())));
    }
    Ok(u)
}

/// CSV text with the schema comment line and a header row.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            buf: format!("# schema-version: {SCHEMA_VERSION}\n{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        let quoted: Vec<String> = fields
            .iter()
            .map(|f| if f.contains(',') { format!("\"{f}\"") } else { f.clone() })
            .collect();
        writeln!(self.buf, "{}", quoted.join(",")).expect("string write");
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

/// `(a,b,…)`.
pub fn tuple(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(","))
}

/// `lo:hi:points`, inclusive of both ends.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Input(format!("grid {spec:?} must be lo:hi:points"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let points: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if points == 0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(bad());
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| if k + 1 == points { hi } else { lo + k as f64 * step })
        .collect())
}

/// `lo:hi:step` over integers, inclusive.
pub fn parse_int_grid(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Input(format!("grid {spec:?} must be lo:hi:step"));
    let parts: Vec<usize> = spec
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    if parts.len() != 3 || parts[2] == 0 || parts[1] < parts[0] {
        return Err(bad());
    }
    Ok((parts[0]..=parts[1]).step_by(parts[2]).collect())
}
