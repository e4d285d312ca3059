use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::{check_header, csv_reader, field, fmt_num, parse_err, read_records, row_of, write_atomic};

pub const TIMESERIES_HEADER: [&str; 5] = ["t_min", "bus", "p_load_pu", "q_load_pu", "p_solar_pu"];

/// Loads and solar generation of every bus at one minute. Vectors are
/// indexed by `bus - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub minute: u32,
    pub p_g: Vec<f64>,
    pub p_c: Vec<f64>,
    pub q_c: Vec<f64>,
}

impl ScenarioRecord {
    pub fn zeros(minute: u32, n: usize) -> Self {
        Self {
            minute,
            p_g: vec![0.0; n],
            p_c: vec![0.0; n],
            q_c: vec![0.0; n],
        }
    }

    pub fn num_buses(&self) -> usize {
        self.p_g.len()
    }
}

/// Reads `timeseries.csv` for a feeder with buses `1..=n_buses`.
///
/// Records come back sorted by minute. A (bus, minute) cell with no row is
/// taken as zero and reported once as a warning; an empty `q_load_pu` cell
/// is zero.
pub fn load_timeseries(path: &Path, n_buses: usize) -> Result<Vec<ScenarioRecord>> {
    let mut rdr = csv_reader(path)?;
    check_header(&mut rdr, path, &TIMESERIES_HEADER)?;
    let mut by_minute: BTreeMap<u32, (ScenarioRecord, Vec<bool>)> = BTreeMap::new();
    for rec in read_records(&mut rdr, path)? {
        let row = row_of(&rec);
        if rec.len() != 5 {
            return Err(parse_err(path, row, format!("expected 5 columns, found {}", rec.len())));
        }
        let minute: u32 = field(&rec, 0, "t_min", path)?;
        let bus: usize = field(&rec, 1, "bus", path)?;
        if bus == 0 || bus > n_buses {
            return Err(parse_err(path, row, format!("bus {bus} outside 1..={n_buses}")));
        }
        let p_load: f64 = field(&rec, 2, "p_load_pu", path)?;
        let q_load: f64 = if rec.get(3).is_some_and(str::is_empty) {
            0.0
        } else {
            field(&rec, 3, "q_load_pu", path)?
        };
        let p_solar: f64 = field(&rec, 4, "p_solar_pu", path)?;
        if !(p_load >= 0.0 && p_solar >= 0.0) || !q_load.is_finite() || !p_load.is_finite() || !p_solar.is_finite() {
            return Err(parse_err(path, row, "active load and solar must be finite and >= 0"));
        }
        let (record, seen) = by_minute
            .entry(minute)
            .or_insert_with(|| (ScenarioRecord::zeros(minute, n_buses), vec![false; n_buses]));
        if seen[bus - 1] {
            return Err(parse_err(path, row, format!("duplicate entry for bus {bus} at minute {minute}")));
        }
        seen[bus - 1] = true;
        record.p_c[bus - 1] = p_load;
        record.q_c[bus - 1] = q_load;
        record.p_g[bus - 1] = p_solar;
    }
    let missing: usize = by_minute.values().map(|(_, s)| s.iter().filter(|v| !**v).count()).sum();
    if missing > 0 {
        warn!("{}: {missing} (bus, minute) cells missing, treated as zero", path.display());
    }
    Ok(by_minute.into_values().map(|(r, _)| r).collect())
}

pub fn timeseries_csv(records: &[ScenarioRecord]) -> String {
    let mut out = TIMESERIES_HEADER.join(",") + "\n";
    for r in records {
        for b in 0..r.num_buses() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.minute,
                b + 1,
                fmt_num(r.p_c[b]),
                fmt_num(r.q_c[b]),
                fmt_num(r.p_g[b])
            );
        }
    }
    out
}

pub fn write_timeseries(records: &[ScenarioRecord], path: &Path) -> Result<()> {
    write_atomic(path, timeseries_csv(records).as_bytes())
}

/// Rescales each bus so its peak active load becomes
/// `target_peak_fraction × benchmark_peaks[bus - 1]`. Solar and reactive
/// load at that bus get the same factor. Buses with a zero benchmark are
/// left untouched.
pub fn scale_profiles(records: &[ScenarioRecord], target_peak_fraction: f64, benchmark_peaks: &[f64]) -> Result<Vec<ScenarioRecord>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let n = first.num_buses();
    crate::error::check_dim(n, benchmark_peaks.len(), "benchmark peaks")?;
    if !(target_peak_fraction > 0.0) {
        return Err(Error::Validation(format!("peak fraction must be > 0, got {target_peak_fraction}")));
    }
    let mut factors = vec![1.0; n];
    for b in 0..n {
        let bench = benchmark_peaks[b];
        if bench < 0.0 {
            return Err(Error::Validation(format!("bus {}: negative benchmark peak", b + 1)));
        }
        if bench == 0.0 {
            continue;
        }
        let peak = records.iter().map(|r| r.p_c[b]).fold(0.0, f64::max);
        if peak <= 0.0 {
            return Err(Error::Validation(format!("bus {}: load series is all zero, cannot scale", b + 1)));
        }
        factors[b] = target_peak_fraction * bench / peak;
    }
    Ok(records
        .iter()
        .map(|r| {
            let mut s = r.clone();
            for b in 0..n {
                s.p_c[b] *= factors[b];
                s.p_g[b] *= factors[b];
                s.q_c[b] *= factors[b];
            }
            s
        })
        .collect())
}

/// Sets `q_c = p_c · tan(arccos φ_n)` with one lagging power factor per bus.
pub fn apply_power_factors(records: &[ScenarioRecord], power_factors: &[f64]) -> Result<Vec<ScenarioRecord>> {
    for &pf in power_factors {
        if !(pf > 0.0 && pf <= 1.0) {
            return Err(Error::Validation(format!("power factor {pf} outside (0, 1]")));
        }
    }
    let ratios: Vec<f64> = power_factors.iter().map(|pf| pf.acos().tan()).collect();
    records
        .iter()
        .map(|r| {
            crate::error::check_dim(ratios.len(), r.num_buses(), "power factors")?;
            let mut s = r.clone();
            for (b, k) in ratios.iter().enumerate() {
                s.q_c[b] = s.p_c[b] * k;
            }
            Ok(s)
        })
        .collect()
}

/// Draws one power factor per bus uniformly from `pf_range` and derives
/// reactive loads from it.
pub fn draw_reactive_loads(records: &[ScenarioRecord], pf_range: (f64, f64), seed: u64) -> Result<Vec<ScenarioRecord>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Validation("no records to draw reactive loads for".into()))?;
    let (lo, hi) = pf_range;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(Error::Validation(format!("power factor range [{lo}, {hi}] not within (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pfs: Vec<f64> = (0..first.num_buses())
        .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect();
    apply_power_factors(records, &pfs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("ts.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_file_gives_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n");
        assert!(load_timeseries(&p, 3).unwrap().is_empty());
    }

    #[test]
    fn echoes_values_sorted_by_minute() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n");
        for t in [2, 0, 1] {
            for b in 1..=2 {
                body += &format!("{t},{b},{},{},{}\n", t as f64 + 0.1 * b as f64, 0.01 * b as f64, 0.5 * t as f64);
            }
        }
        let recs = load_timeseries(&write(&dir, &body), 2).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs.iter().map(|r| r.minute).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(recs[2].p_c, vec![2.1, 2.2]);
        assert_eq!(recs[1].q_c, vec![0.01, 0.02]);
        assert_eq!(recs[2].p_g, vec![1.0, 1.0]);
    }

    #[test]
    fn duplicate_key_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n0,1,0.1,,0\n0,2,0.1,,0\n0,1,0.2,,0\n");
        match load_timeseries(&p, 2) {
            Err(Error::Parse { row, message, .. }) => {
                assert_eq!(row, 4);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cells_are_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "t_min,bus,p_load_pu,q_load_pu,p_solar_pu\n0,1,0.1,,0.3\n");
        let recs = load_timeseries(&p, 2).unwrap();
        assert_eq!(recs[0].p_c, vec![0.1, 0.0]);
        assert_eq!(recs[0].q_c, vec![0.0, 0.0]);
    }

    #[test]
    fn scaling_examples() {
        let recs: Vec<_> = [1.0, 2.0, 0.5]
            .iter()
            .enumerate()
            .map(|(t, &p)| ScenarioRecord {
                minute: t as u32,
                p_g: vec![0.8],
                p_c: vec![p],
                q_c: vec![0.0],
            })
            .collect();
        let scaled = scale_profiles(&recs, 0.5, &[1.0]).unwrap();
        assert_eq!(scaled[1].p_c[0], 0.5);
        assert_eq!(scaled[0].p_g[0], 0.2);
        let same = scale_profiles(&recs, 1.0, &[2.0]).unwrap();
        assert_eq!(same, recs);
        let zero = vec![ScenarioRecord::zeros(0, 1)];
        assert!(scale_profiles(&zero, 0.5, &[1.0]).is_err());
    }

    #[test]
    fn power_factor_examples() {
        let recs = vec![ScenarioRecord {
            minute: 0,
            p_g: vec![0.0, 0.0],
            p_c: vec![0.9, 0.9],
            q_c: vec![0.0, 0.0],
        }];
        let out = apply_power_factors(&recs, &[1.0, 0.9]).unwrap();
        assert_eq!(out[0].q_c[0], 0.0);
        // 0.9 · sqrt(1 - 0.81) / 0.9
        assert!((out[0].q_c[1] - 0.435_889_894_354_067_4).abs() < 1e-12);
        assert!(draw_reactive_loads(&[], (0.9, 0.95), 1).is_err());
    }

    #[test]
    fn drawing_is_deterministic() {
        let recs = vec![ScenarioRecord {
            minute: 0,
            p_g: vec![0.0; 3],
            p_c: vec![0.5, 0.2, 0.1],
            q_c: vec![0.0; 3],
        }];
        let a = draw_reactive_loads(&recs, (0.9, 0.95), 11).unwrap();
        let b = draw_reactive_loads(&recs, (0.9, 0.95), 11).unwrap();
        assert_eq!(a, b);
        for (b, &p) in recs[0].p_c.iter().enumerate() {
            let ratio = a[0].q_c[b] / p;
            assert!(ratio >= 0.95f64.acos().tan() - 1e-12 && ratio <= 0.9f64.acos().tan() + 1e-12);
        }
    }
}
