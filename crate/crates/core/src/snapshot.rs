//! Snapshot files: per-field CSV grids, legacy VTK structured points,
//! 8-bit graymap heatmaps and the diagnostics table.
//!
//! CSV layout, one file per field and snapshot:
//!
//! ```text
//! # field=m t=0.5 nx=3 ny=2
//! m(0,0),m(1,0),m(2,0)
//! m(0,1),m(1,1),m(2,1)
//! ```
//!
//! Values are written with 17 significant digits (`%.17g`), which round-trips
//! every `f64` exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::OutputFormat;
use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{Field, State};

/// Formats like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// File name of a CSV field snapshot.
pub fn csv_path(dir: &Path, field: Field, index: usize) -> PathBuf {
    dir.join(format!("{}_{:05}.csv", field.as_str(), index))
}

pub fn vtk_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("state_{index:05}.vtk"))
}

pub fn pgm_path(dir: &Path, field: Field, index: usize) -> PathBuf {
    dir.join(format!("{}_{:05}.pgm", field.as_str(), index))
}

pub fn render_csv_field(field: Field, time: f64, grid: &Grid, values: &[f64]) -> String {
    let mut out = format!("# field={} t={} nx={} ny={}\n", field, fmt_g17(time), grid.nx(), grid.ny());
    for j in 0..grid.ny() {
        let row: Vec<String> = (0..grid.nx()).map(|i| fmt_g17(values[grid.index(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv_field(path: &Path, field: Field, time: f64, grid: &Grid, values: &[f64]) -> Result<()> {
    fs::write(path, render_csv_field(field, time, grid, values)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvHeader {
    pub field: Field,
    pub time: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Parses a CSV field file back into its header and row-major values.
pub fn read_csv_field(path: &Path) -> Result<(CsvHeader, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_field(&text).map_err(|message| Error::Snapshot { path: path.to_owned(), message })
}

fn parse_csv_field(text: &str) -> std::result::Result<(CsvHeader, Vec<f64>), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let header = header.strip_prefix("# ").ok_or("missing `# ` header")?;
    let (mut field, mut time, mut nx, mut ny) = (None, None, None, None);
    for kv in header.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad header entry `{kv}`"))?;
        match k {
            "field" => field = Some(v.parse::<Field>()?),
            "t" => time = Some(v.parse::<f64>().map_err(|e| e.to_string())?),
            "nx" => nx = Some(v.parse::<usize>().map_err(|e| e.to_string())?),
            "ny" => ny = Some(v.parse::<usize>().map_err(|e| e.to_string())?),
            _ => return Err(format!("unknown header key `{k}`")),
        }
    }
    let header = CsvHeader {
        field: field.ok_or("header lacks field")?,
        time: time.ok_or("header lacks t")?,
        nx: nx.ok_or("header lacks nx")?,
        ny: ny.ok_or("header lacks ny")?,
    };
    let mut values = Vec::with_capacity(header.nx * header.ny);
    let mut rows = 0;
    for line in lines {
        let before = values.len();
        for tok in line.split(',') {
            values.push(tok.trim().parse::<f64>().map_err(|e| format!("row {rows}: {e}"))?);
        }
        if values.len() - before != header.nx {
            return Err(format!("row {rows} has {} values, expected {}", values.len() - before, header.nx));
        }
        rows += 1;
    }
    if rows != header.ny {
        return Err(format!("found {rows} rows, expected {}", header.ny));
    }
    Ok((header, values))
}

pub fn render_vtk(state: &State, grid: &Grid, time: f64) -> String {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(&format!("haptogrow t={}\n", fmt_g17(time)));
    out.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    out.push_str(&format!("DIMENSIONS {} {} 1\n", grid.nx() + 1, grid.ny() + 1));
    out.push_str("ORIGIN 0 0 0\n");
    out.push_str(&format!("SPACING {} {} 1\n", fmt_g17(grid.hx()), fmt_g17(grid.hy())));
    out.push_str(&format!("CELL_DATA {}\n", grid.num_cells()));
    for field in Field::ALL {
        out.push_str(&format!("SCALARS {} double 1\nLOOKUP_TABLE default\n", field));
        for x in state.field(field).iter() {
            out.push_str(&fmt_g17(*x));
            out.push('\n');
        }
    }
    out
}

/// Binary 8-bit graymap, top row = largest `y`. Returns the `(min, max)`
/// mapped to 0 and 255.
pub fn render_pgm(grid: &Grid, values: &[f64]) -> (Vec<u8>, f64, f64) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = hi - lo;
    let mut bytes = format!("P5\n{} {}\n255\n", grid.nx(), grid.ny()).into_bytes();
    for j in (0..grid.ny()).rev() {
        for i in 0..grid.nx() {
            let x = values[grid.index(i, j)];
            let level = if span > 0.0 { ((x - lo) / span * 255.0).round().clamp(0.0, 255.0) } else { 0.0 };
            bytes.push(level as u8);
        }
    }
    (bytes, lo, hi)
}

/// Writes the snapshot files of one state into a directory.
#[derive(Debug, Clone)]
pub struct SnapshotWriter {
    pub dir: PathBuf,
    pub format: OutputFormat,
    pub heatmaps: bool,
}

impl SnapshotWriter {
    pub fn new(dir: impl Into<PathBuf>, format: OutputFormat, heatmaps: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(SnapshotWriter { dir, format, heatmaps })
    }

    /// Returns the paths written.
    pub fn write(&self, index: usize, time: f64, state: &State, grid: &Grid) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        match self.format {
            OutputFormat::CsvGrid => {
                for field in Field::ALL {
                    let path = csv_path(&self.dir, field, index);
                    write_csv_field(&path, field, time, grid, &state.field(field))?;
                    written.push(path);
                }
            }
            OutputFormat::VtkLegacy => {
                let path = vtk_path(&self.dir, index);
                fs::write(&path, render_vtk(state, grid, time)).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
        }
        if self.heatmaps {
            for field in Field::ALL {
                let path = pgm_path(&self.dir, field, index);
                let (bytes, lo, hi) = render_pgm(grid, &state.field(field));
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                let sidecar = path.with_extension("pgm.txt");
                let text = format!("field={}\nt={}\nmin={}\nmax={}\n", field, fmt_g17(time), fmt_g17(lo), fmt_g17(hi));
                fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
                written.push(path);
                written.push(sidecar);
            }
        }
        Ok(written)
    }
}

/// Streams [`DiagnosticsRecord`]s as CSV rows under a fixed header.
pub struct DiagnosticsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut out = create(&path)?;
        writeln!(out, "{}", DiagnosticsRecord::CSV_HEADER).map_err(|e| Error::io(&path, e))?;
        Ok(DiagnosticsWriter { path, out })
    }

    pub fn append(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", record.csv_row()).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Snapshot indices that have a complete `m`, `p`, `v` CSV set in `dir`,
/// in ascending order.
pub fn list_csv_snapshots(dir: &Path) -> Result<Vec<usize>> {
    let mut indices = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(idx) = name.strip_prefix("m_").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(idx) = idx.parse::<usize>() {
                if [Field::P, Field::V].iter().all(|&f| csv_path(dir, f, idx).exists()) {
                    indices.push(idx);
                }
            }
        }
    }
    indices.sort_unstable();
    Ok(indices)
}

/// A state reloaded from CSV files, plus its `c` file when present.
#[derive(Debug, Clone)]
pub struct LoadedSnapshot {
    pub index: usize,
    pub time: f64,
    pub grid: Grid,
    pub state: State,
    pub c: Option<Vec<f64>>,
}

pub fn load_csv_snapshot(dir: &Path, index: usize) -> Result<LoadedSnapshot> {
    let (hm, m) = read_csv_field(&csv_path(dir, Field::M, index))?;
    let (hp, p) = read_csv_field(&csv_path(dir, Field::P, index))?;
    let (hv, v) = read_csv_field(&csv_path(dir, Field::V, index))?;
    for (h, expect, f) in [(&hm, Field::M, Field::M), (&hp, Field::P, Field::P), (&hv, Field::V, Field::V)] {
        if h.field != expect || (h.nx, h.ny) != (hm.nx, hm.ny) {
            return Err(Error::Snapshot {
                path: csv_path(dir, f, index),
                message: "inconsistent header in snapshot set".into(),
            });
        }
    }
    let grid = Grid::new(hm.nx, hm.ny)?;
    let c_path = csv_path(dir, Field::C, index);
    let c = if c_path.exists() { Some(read_csv_field(&c_path)?.1) } else { None };
    Ok(LoadedSnapshot { index, time: hm.time, grid, state: State::new(m, p, v)?, c })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g17_matches_printf() {
        assert_eq!(fmt_g17(0.0), "0");
        assert_eq!(fmt_g17(0.5), "0.5");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(-2.5e-7), "-2.4999999999999999e-07");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(0.0001), "0.0001");
        assert_eq!(fmt_g17(1.0 / 3.0), "0.33333333333333331");
    }

    proptest! {
        #[test]
        fn g17_round_trips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back: f64 = fmt_g17(x).parse().unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }

    #[test]
    fn zero_state_csv_body() {
        let grid = Grid::new(2, 2).unwrap();
        let text = render_csv_field(Field::M, 0.0, &grid, &[0.0; 4]);
        assert_eq!(text, "# field=m t=0 nx=2 ny=2\n0,0\n0,0\n");
    }

    #[test]
    fn csv_rows_follow_y() {
        let grid = Grid::new(3, 2).unwrap();
        let values: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let text = render_csv_field(Field::V, 1.5, &grid, &values);
        assert_eq!(text, "# field=v t=1.5 nx=3 ny=2\n0,1,2\n3,4,5\n");
        let (h, back) = parse_csv_field(&text).unwrap();
        assert_eq!(h, CsvHeader { field: Field::V, time: 1.5, nx: 3, ny: 2 });
        assert_eq!(back, values);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_csv_field("").is_err());
        assert!(parse_csv_field("# field=m t=0 nx=2 ny=2\n0,0\n").is_err());
        assert!(parse_csv_field("# field=m t=0 nx=2 ny=1\n0,0,0\n").is_err());
        assert!(parse_csv_field("# field=q t=0 nx=2 ny=1\n0,0\n").is_err());
    }

    #[test]
    fn vtk_layout() {
        let grid = Grid::new(2, 3).unwrap();
        let state = State::uniform(6, 0.25, 0.5, 1.0);
        let text = render_vtk(&state, &grid, 2.0);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[2], "ASCII");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 3 4 1");
        assert_eq!(lines[7], "CELL_DATA 6");
        assert_eq!(lines[8], "SCALARS m double 1");
        assert_eq!(lines[10], "0.25");
        assert!(text.contains("SCALARS c double 1\nLOOKUP_TABLE default\n0.75\n"));
        assert_eq!(lines.len(), 8 + 4 * (2 + 6));
    }

    #[test]
    fn pgm_scaling() {
        let grid = Grid::new(2, 2).unwrap();
        let (bytes, lo, hi) = render_pgm(&grid, &[0.0, 1.0, 2.0, 4.0]);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // top row is j = 1
        assert_eq!(&bytes[header.len()..], &[128, 255, 0, 64]);
        assert_eq!((lo, hi), (0.0, 4.0));
        let (flat, _, _) = render_pgm(&grid, &[3.0; 4]);
        assert!(flat[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn written_snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(5, 4).unwrap();
        let n = grid.num_cells();
        let state = State::new(
            (0..n).map(|k| (k as f64 * 0.37).sin().abs() / 3.0).collect(),
            (0..n).map(|k| (k as f64 * 1.1).cos().abs() * 0.7).collect(),
            (0..n).map(|k| 1.0 / (1.0 + k as f64)).collect(),
        )
        .unwrap();
        let writer = SnapshotWriter::new(dir.path(), OutputFormat::CsvGrid, true).unwrap();
        let written = writer.write(3, 0.125, &state, &grid).unwrap();
        assert_eq!(written.len(), 4 + 8);
        assert_eq!(list_csv_snapshots(dir.path()).unwrap(), vec![3]);
        let back = load_csv_snapshot(dir.path(), 3).unwrap();
        assert_eq!(back.time, 0.125);
        assert_eq!(back.state, state);
        let c = back.c.unwrap();
        for k in 0..n {
            assert_eq!(c[k], back.state.m[k] + back.state.p[k]);
        }
        let sidecar = fs::read_to_string(pgm_path(dir.path(), Field::V, 3).with_extension("pgm.txt")).unwrap();
        assert!(sidecar.contains("max=1\n"));
    }

    #[test]
    fn diagnostics_stream_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.csv");
        let grid = Grid::new(2, 2).unwrap();
        let mut w = DiagnosticsWriter::create(&path).unwrap();
        w.append(&crate::diagnostics::compute_record(&State::zeros(4), &grid, 0.0, None)).unwrap();
        w.finish().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), DiagnosticsRecord::CSV_HEADER);
        assert!(lines.next().unwrap().starts_with("0,0,0,"));
    }
}
