//! CSV output, profile reading and gnuplot scripts.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::continuation::BranchTrace;
use crate::dtn::BulkField;
use crate::spectral::{Grid, GridFunction};

/// Formats with 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_profile_csv(path: &Path, eta: &GridFunction<f64>) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,eta")?;
    for (x, v) in eta.grid().points().iter().zip(eta.values()) {
        writeln!(w, "{},{}", fmt_f64(*x), fmt_f64(*v))?;
    }
    w.flush()
}

/// Reads a profile written by [`write_profile_csv`].
pub fn read_profile_csv(path: &Path) -> io::Result<GridFunction<f64>> {
    let invalid = |msg: String| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {msg}", path.display()));
    let reader = BufReader::new(fs::File::open(path)?);
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "x,eta" {
                return Err(invalid(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(1).ok_or_else(|| invalid(format!("line {}: missing eta column", i + 1)))?;
        let v: f64 = field.trim().parse().map_err(|e| invalid(format!("line {}: {e}", i + 1)))?;
        values.push(v);
    }
    let grid: Arc<Grid<f64>> = Grid::new(values.len()).map_err(|e| invalid(e.to_string()))?;
    GridFunction::new(grid, values).map_err(|e| invalid(e.to_string()))
}

pub const BRANCH_HEADER: &str = "kappa,arclength,residual_sup,c1_norm,holder_seminorm,clearance";

pub fn write_branch_csv(path: &Path, trace: &BranchTrace<f64>) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{BRANCH_HEADER}")?;
    for p in &trace.points {
        let d = &p.diagnostics;
        let clearance = d.bottom_clearance.map_or_else(|| "nan".to_string(), fmt_f64);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(p.kappa),
            fmt_f64(p.arclength),
            fmt_f64(d.residual_sup),
            fmt_f64(d.c1_norm),
            fmt_f64(d.holder_seminorm),
            clearance
        )?;
    }
    w.flush()
}

pub fn write_bulk_csv(path: &Path, bulk: &BulkField<f64>) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "x,y,q,u_x,u_y,p")?;
    for i in 0..bulk.x.len() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(bulk.x[i]),
            fmt_f64(bulk.y[i]),
            fmt_f64(bulk.q[i]),
            fmt_f64(bulk.u_x[i]),
            fmt_f64(bulk.u_y[i]),
            fmt_f64(bulk.p[i])
        )?;
        if (i + 1) % bulk.n == 0 {
            writeln!(w)?;
        }
    }
    w.flush()
}

/// Writes a CSV with the given header and numeric rows.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()
}

/// Gnuplot script plotting the given profile files and, when present, the
/// branch diagram.
pub fn gnuplot_script(profiles: &[String], branch: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set terminal pngcairo size 900,600");
    if !profiles.is_empty() {
        let _ = writeln!(s, "set output 'profiles.png'");
        let _ = writeln!(s, "set xlabel 'x'; set ylabel 'eta'");
        let parts: Vec<String> =
            profiles.iter().map(|p| format!("'{p}' using 1:2 with lines title '{p}'")).collect();
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    if let Some(b) = branch {
        let _ = writeln!(s, "set output 'branch_c1.png'");
        let _ = writeln!(s, "set xlabel 'kappa'; set ylabel 'C1 norm'");
        let _ = writeln!(s, "plot '{b}' using 1:4 with linespoints title 'c1_norm'");
        let _ = writeln!(s, "set output 'branch_clearance.png'");
        let _ = writeln!(s, "set ylabel 'bottom clearance'");
        let _ = writeln!(s, "plot '{b}' using 1:6 with linespoints title 'clearance'");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::<f64>::new(16).unwrap();
        let eta = GridFunction::from_fn(&g, |x| 0.1 * x.cos() + 1e-17 * x.sin() + std::f64::consts::PI * 1e-3);
        let path = dir.path().join("p.csv");
        write_profile_csv(&path, &eta).unwrap();
        let back = read_profile_csv(&path).unwrap();
        assert_eq!(back.values(), eta.values());
        let first = fs::read_to_string(&path).unwrap();
        write_profile_csv(&path, &back).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), first);
    }

    #[test]
    fn rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, "a,b\n0,1\n").unwrap();
        assert!(read_profile_csv(&path).is_err());
    }

    #[test]
    fn script_mentions_branch_columns() {
        let s = gnuplot_script(&["eta.csv".into()], Some("branch.csv"));
        assert!(s.contains("using 1:4") && s.contains("using 1:6") && s.contains("eta.csv"));
    }
}
