use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use kvar::kernels::KernelSpec;
use kvar::scenario::FeatureSelector;
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "kvar", version, about = "Kernel-based reactive power control rules for radial feeders")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Write the voltage sensitivity matrices R and X.
    Sensitivities(SensitivitiesArgs),
    /// Solve the per-minute optimal dispatch.
    Dispatch(DispatchArgs),
    /// Train control rules on one window of scenarios.
    Train(TrainArgs),
    /// Cross-validate the regularization weight and kernel width.
    Crossval(CrossvalArgs),
    /// Rolling-horizon comparison of rules, stale setpoints and optimal dispatch.
    Simulate(SimulateArgs),
    /// Generate (or import and rescale) a day of minute data.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeederArgs {
    /// Directory holding lines.csv and buses.csv.
    #[arg(long, conflicts_with_all = ["lines", "buses"], required_unless_present = "lines")]
    pub feeder: Option<PathBuf>,
    #[arg(long, requires = "buses")]
    pub lines: Option<PathBuf>,
    #[arg(long, requires = "lines")]
    pub buses: Option<PathBuf>,
    /// Substation voltage (p.u.).
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Weight of voltage deviations against losses.
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WindowArgs {
    #[arg(long)]
    pub timeseries: PathBuf,
    /// Rule inputs: local, global, or hybrid:<from-to,...>.
    #[arg(long, default_value = "local", value_parser = parse_selector)]
    pub features: FeatureSelector,
    /// Training scenarios (minutes).
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    /// First minute of the training window (minutes or HH:MM).
    #[arg(long, value_parser = parse_minute)]
    pub start: u32,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1])]
    pub mu_grid: Vec<f64>,
    /// Gaussian widths as multiples of the median squared feature distance.
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 1.0, 2.0, 4.0])]
    pub gamma_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SensitivitiesArgs {
    #[command(flatten)]
    pub feeder: FeederArgs,
    /// Output directory for R.csv, X.csv and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DispatchArgs {
    #[command(flatten)]
    pub feeder: FeederArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub timeseries: PathBuf,
    /// Minute of the day (minutes or HH:MM).
    #[arg(long, value_parser = parse_minute)]
    pub minute: u32,
    /// Setpoint CSV; the manifest goes next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub feeder: FeederArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    /// linear, poly:<beta>,<gamma> or gaussian:<gamma>.
    #[arg(long, default_value = "gaussian:1", value_parser = parse_kernel)]
    pub kernel: KernelSpec,
    #[arg(long, default_value_t = 1e-4)]
    pub mu: f64,
    /// Gaussian width as a multiple of the median squared feature distance
    /// (overrides the width in --kernel).
    #[arg(long)]
    pub gamma_multiplier: Option<f64>,
    /// Pick mu and the width by cross-validation instead.
    #[arg(long)]
    pub cv: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Permit mu = 0 (singular training problem).
    #[arg(long)]
    pub unsafe_mu_zero: bool,
    /// Policy file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub feeder: FeederArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, default_value = "gaussian:1", value_parser = parse_kernel)]
    pub kernel: KernelSpec,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score report CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub feeder: FeederArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub timeseries: PathBuf,
    #[arg(long, default_value = "local", value_parser = parse_selector)]
    pub features: FeatureSelector,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 30)]
    pub retrain_period: u32,
    /// Comma-separated: optimal, gaussian, linear, stale[:minutes], zero.
    #[arg(long, default_value = "optimal,gaussian,linear,stale:5,zero")]
    pub methods: String,
    #[arg(long, default_value = "11:00", value_parser = parse_minute)]
    pub from: u32,
    #[arg(long, default_value = "18:00", value_parser = parse_minute)]
    pub to: u32,
    /// Fixed mu instead of cross-validation.
    #[arg(long, requires = "gamma_multiplier")]
    pub mu: Option<f64>,
    #[arg(long, requires = "mu")]
    pub gamma_multiplier: Option<f64>,
    /// Cross-validate on the first window only.
    #[arg(long, conflicts_with = "mu")]
    pub cv_once: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gap report CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub feeder: FeederArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rescale an existing timeseries instead of synthesizing one.
    #[arg(long)]
    pub import: Option<PathBuf>,
    /// CSV `bus,benchmark_pu` of benchmark peak loads (with --import).
    #[arg(long, requires = "import")]
    pub benchmark: Option<PathBuf>,
    /// Target load peak as a fraction of the benchmark (with --import).
    #[arg(long, default_value_t = 0.5)]
    pub peak_fraction: f64,
    /// Lagging power factor range for drawn reactive loads.
    #[arg(long, default_value_t = 0.90)]
    pub pf_min: f64,
    #[arg(long, default_value_t = 0.95)]
    pub pf_max: f64,
    /// Keep imported reactive loads instead of drawing power factors.
    #[arg(long, requires = "import")]
    pub keep_reactive: bool,
    #[arg(long)]
    pub cloud_noise: Option<f64>,
    #[arg(long)]
    pub clear_sky_peak: Option<f64>,
    #[arg(long)]
    pub load_noise: Option<f64>,
    /// Output timeseries CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_selector(s: &str) -> Result<FeatureSelector, String> {
    s.parse().map_err(|e: kvar::Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<KernelSpec, String> {
    s.parse().map_err(|e: kvar::Error| e.to_string())
}

/// Minute of the day from `M` or `HH:MM`.
pub fn parse_minute(s: &str) -> Result<u32, String> {
    let bad = || format!("expected minutes or HH:MM, got {s:?}");
    match s.split_once(':') {
        Some((h, m)) => {
            let h: u32 = h.parse().map_err(|_| bad())?;
            let m: u32 = m.parse().map_err(|_| bad())?;
            if m >= 60 || h > 24 {
                return Err(bad());
            }
            Ok(h * 60 + m)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn minutes() {
        assert_eq!(parse_minute("11:00"), Ok(660));
        assert_eq!(parse_minute("725"), Ok(725));
        assert!(parse_minute("11:75").is_err());
        assert!(parse_minute("noon").is_err());
    }
}
