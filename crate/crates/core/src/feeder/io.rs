use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::topology::{FeederTopology, Line};
use crate::error::Result;
use crate::io_util::{check_header, csv_reader, field, fmt_num, parse_err, read_records, row_of, write_atomic};

pub const LINES_HEADER: [&str; 4] = ["from", "to", "r_pu", "x_pu"];
pub const BUSES_HEADER: [&str; 2] = ["bus", "s_rating_pu"];

pub fn read_lines(path: &Path) -> Result<Vec<Line>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &LINES_HEADER)?;
    read_records(&mut rdr, path)?
        .iter()
        .map(|rec| {
            if rec.len() != 4 {
                return Err(parse_err(path, row_of(rec), format!("expected 4 columns, found {}", rec.len())));
            }
            Ok(Line {
                from: field(rec, 0, "from", path)?,
                to: field(rec, 1, "to", path)?,
                r: field(rec, 2, "r_pu", path)?,
                x: field(rec, 3, "x_pu", path)?,
            })
        })
        .collect()
}

pub const BENCHMARK_HEADER: [&str; 2] = ["bus", "benchmark_pu"];

/// Reads `buses.csv` into a rating vector for buses `1..=n`. Buses without a
/// row get rating 0; the substation row, if any, is ignored.
pub fn read_ratings(path: &Path, n: usize) -> Result<Vec<f64>> {
    read_bus_column(path, n, &BUSES_HEADER)
}

/// Reads benchmark peak loads (`bus,benchmark_pu`) the same way.
pub fn read_benchmark(path: &Path, n: usize) -> Result<Vec<f64>> {
    read_bus_column(path, n, &BENCHMARK_HEADER)
}

fn read_bus_column(path: &Path, n: usize, header: &[&str; 2]) -> Result<Vec<f64>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, header)?;
    let mut values = vec![0.0; n];
    let mut seen = vec![false; n + 1];
    for rec in read_records(&mut rdr, path)? {
        let row = row_of(&rec);
        if rec.len() != 2 {
            return Err(parse_err(path, row, format!("expected 2 columns, found {}", rec.len())));
        }
        let bus: usize = field(&rec, 0, "bus", path)?;
        let v: f64 = field(&rec, 1, header[1], path)?;
        if bus > n {
            return Err(parse_err(path, row, format!("bus {bus} does not exist (feeder has buses 0..={n})")));
        }
        if seen[bus] {
            return Err(parse_err(path, row, format!("duplicate bus {bus}")));
        }
        seen[bus] = true;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(parse_err(path, row, format!("{} must be >= 0, got {v}", header[1])));
        }
        if bus > 0 {
            values[bus - 1] = v;
        }
    }
    Ok(values)
}

pub fn read_feeder(lines_path: &Path, buses_path: &Path, v0: f64) -> Result<FeederTopology> {
    let lines = read_lines(lines_path)?;
    let ratings = read_ratings(buses_path, lines.len())?;
    FeederTopology::new(lines, ratings, v0)
}

pub fn write_feeder(topology: &FeederTopology, lines_path: &Path, buses_path: &Path) -> Result<()> {
    let mut lines = LINES_HEADER.join(",") + "\n";
    for l in topology.lines() {
        let _ = writeln!(lines, "{},{},{},{}", l.from, l.to, fmt_num(l.r), fmt_num(l.x));
    }
    let mut buses = BUSES_HEADER.join(",") + "\n";
    for (i, s) in topology.ratings().iter().enumerate() {
        let _ = writeln!(buses, "{},{}", i + 1, fmt_num(*s));
    }
    write_atomic(lines_path, lines.as_bytes())?;
    write_atomic(buses_path, buses.as_bytes())
}

/// Renders an `N×N` matrix as CSV with bus-id row and column headers.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let n = m.nrows();
    let mut out = String::from("bus");
    for j in 1..=n {
        let _ = write!(out, ",{j}");
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{}", i + 1);
        for j in 0..m.ncols() {
            let _ = write!(out, ",{}", fmt_num(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}
