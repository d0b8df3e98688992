//! Artifact emission: CSV and JSON with bit-exact round trips, written
//! atomically (temp file + rename in the target directory).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use iprw_core::grid::{GridKind, GridMeasure, MassRule};

/// 17 significant digits: enough to reproduce any f64 bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `t,value` rows for a grid series.
pub fn grid_to_csv(grid: &GridMeasure) -> String {
    let mut out = String::from("t,value\n");
    for k in 0..grid.len() {
        out.push_str(&fmt_f64(k as f64 * grid.h()));
        out.push(',');
        out.push_str(&fmt_f64(grid.at_index(k)));
        out.push('\n');
    }
    out
}

/// Parse a `t,value` CSV back into a grid (kind and mass rule are not part
/// of the CSV; the caller supplies them). The round-trip counterpart of
/// `grid_to_csv`; the binary itself only writes.
#[allow(dead_code)]
pub fn grid_from_csv(
    text: &str,
    kind: GridKind,
    rule: MassRule,
) -> Result<GridMeasure, String> {
    let mut values = Vec::new();
    let mut h = None;
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "t,value" {
                return Err(format!("unexpected header {line:?}"));
            }
            continue;
        }
        let (t_str, v_str) = line
            .split_once(',')
            .ok_or_else(|| format!("malformed row {i}"))?;
        let t: f64 = t_str.parse().map_err(|e| format!("row {i}: {e}"))?;
        let v: f64 = v_str.parse().map_err(|e| format!("row {i}: {e}"))?;
        if i == 2 {
            h = Some(t);
        }
        values.push(v);
    }
    let h = h.ok_or("need at least two rows")?;
    GridMeasure::new(h, values, kind, rule).map_err(|e| e.to_string())
}

/// Rows of `(replicate, generation, fraction, value)` as CSV.
pub fn paths_to_csv<T: Copy + Into<f64>>(
    header: &str,
    rows: impl Iterator<Item = (usize, u32, f64, T)>,
) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for (r, j, u, v) in rows {
        out.push_str(&format!("{r},{j},{},{}\n", fmt_f64(u), fmt_f64(v.into())));
    }
    out
}

/// Minimal plotting companion for the emitted CSVs.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot any of the emitted CSV artifacts.

usage: python3 plot.py <file.csv> [out.png]

Series files (header `t,value`) are drawn as lines; multi-column files
(e.g. `t,mc_var,grid_var,theory`) get one line per column.
"""
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1]
out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"
with open(path) as fh:
    rows = list(csv.reader(fh))
header, data = rows[0], rows[1:]
xs = [float(r[0]) for r in data]
for col in range(1, len(header)):
    plt.plot(xs, [float(r[col]) for r in data], label=header[col])
plt.xlabel(header[0])
plt.legend()
plt.tight_layout()
plt.savefig(out, dpi=150)
print(out)
"#;

/// Project a path relative to an output directory for manifest listings.
pub fn rel_name(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir)
        .map(|p| p.to_string_lossy().into_owned())
        .unwrap_or_else(|_| path.to_string_lossy().into_owned())
}

pub fn artifact_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
