use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::CommandFactory;
use kvar::crossval::{cv_report_csv, grid_search, CvGrid, GridPoint};
use kvar::feeder::io::{matrix_csv, read_benchmark, read_feeder};
use kvar::feeder::{Feeder, FeederTopology};
use kvar::io_util::{fmt_num, write_atomic};
use kvar::policy::{optimal_dispatch, policies_to_json, train_policies, TrainingConfig};
use kvar::qp::SolverSettings;
use kvar::scenario::{
    draw_reactive_loads, load_timeseries, reactive_limits, scale_profiles, synthesize_day, timeseries_csv,
    ScenarioRecord, ScenarioWindow, SynthOptions,
};
use kvar::seeds::sub_seed;
use kvar::simulator::{cost_gap_csv, parse_methods, run_simulation, SimulationConfig, Tuning};
use serde_json::json;

use crate::args::*;
use crate::manifest;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sensitivities(a) => sensitivities(a),
        Command::Dispatch(a) => dispatch(a),
        Command::Train(a) => train(a),
        Command::Crossval(a) => crossval(a),
        Command::Simulate(a) => simulate(a),
        Command::GenData(a) => gen_data(a),
    }
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

fn load_feeder(a: &FeederArgs) -> Result<FeederTopology> {
    let (lines, buses) = match (&a.feeder, &a.lines, &a.buses) {
        (Some(dir), _, _) => (dir.join("lines.csv"), dir.join("buses.csv")),
        (None, Some(l), Some(b)) => (l.clone(), b.clone()),
        _ => bail!("give --feeder DIR or both --lines and --buses"),
    };
    Ok(read_feeder(&lines, &buses, a.v0)?)
}

fn load_records(path: &Path, topology: &FeederTopology) -> Result<Vec<ScenarioRecord>> {
    load_timeseries(path, topology.num_buses()).with_context(|| format!("reading {}", path.display()))
}

fn record_at<'a>(records: &'a [ScenarioRecord], minute: u32) -> Result<&'a ScenarioRecord> {
    records
        .iter()
        .find(|r| r.minute == minute)
        .with_context(|| format!("no data for minute {minute}"))
}

fn training_window(records: &[ScenarioRecord], topology: &FeederTopology, w: &WindowArgs) -> Result<ScenarioWindow> {
    if w.window == 0 {
        bail!("--window must be >= 1");
    }
    let recs = (w.start..w.start + w.window as u32)
        .map(|m| record_at(records, m).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioWindow::new(recs, topology, &w.features)?)
}

fn grid(g: &GridArgs) -> CvGrid {
    CvGrid {
        mu_values: g.mu_grid.clone(),
        gamma_multipliers: g.gamma_grid.clone(),
        folds: g.folds,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn sensitivities(a: &SensitivitiesArgs) -> Result<()> {
    let topology = load_feeder(&a.feeder)?;
    let sens = kvar::feeder::build_sensitivities(&topology);
    let (min_r, min_x) = sens.min_eigenvalues();
    if !(min_r > 0.0 && min_x > 0.0) {
        bail!("sensitivity matrices are not positive definite (min eigenvalues {min_r:e}, {min_x:e})");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let (r_path, x_path) = (a.out.join("R.csv"), a.out.join("X.csv"));
    write_atomic(&r_path, matrix_csv(&sens.r).as_bytes())?;
    write_atomic(&x_path, matrix_csv(&sens.x).as_bytes())?;
    manifest::write(
        &a.out.join("manifest.json"),
        "sensitivities",
        a,
        &[&r_path, &x_path],
        json!({ "buses": topology.num_buses(), "min_eigenvalue_r": min_r, "min_eigenvalue_x": min_x }),
    )
}

fn dispatch(a: &DispatchArgs) -> Result<()> {
    let topology = load_feeder(&a.feeder)?;
    let records = load_records(&a.timeseries, &topology)?;
    let r = record_at(&records, a.minute)?;
    let feeder = Feeder::new(topology, a.model.lambda)?;
    let limits = reactive_limits(r, &feeder.topology)?;
    let y = feeder.y(&r.p_g, &r.p_c, &r.q_c)?;
    let q = optimal_dispatch(&feeder.transform, &y, &limits, &SolverSettings::default())?;
    let cost = feeder.transform.cost(&q, &y);
    let zero_cost = y.norm_squared();

    let mut csv = String::from("bus,q_g_pu\n");
    for (i, v) in q.iter().enumerate() {
        csv += &format!("{},{}\n", i + 1, fmt_num(*v));
    }
    ensure_parent(&a.out)?;
    write_atomic(&a.out, csv.as_bytes())?;
    println!("cost {cost:.6e} (zero injection {zero_cost:.6e})");
    manifest::write(
        &manifest::beside(&a.out),
        "dispatch",
        a,
        &[&a.out],
        json!({ "cost": cost, "zero_injection_cost": zero_cost }),
    )
}

fn train(a: &TrainArgs) -> Result<()> {
    if a.mu == 0.0 && !a.unsafe_mu_zero && !a.cv {
        usage_error("--mu 0 leaves the training problem singular; pass --unsafe-mu-zero to allow it");
    }
    let topology = load_feeder(&a.feeder)?;
    let records = load_records(&a.window.timeseries, &topology)?;
    let window = training_window(&records, &topology, &a.window)?;
    let feeder = Feeder::new(topology, a.model.lambda)?;
    let solver = SolverSettings::default();

    let (point, cv) = if a.cv {
        let out = grid_search(&window, &grid(&a.grid), a.kernel, &feeder, &solver, sub_seed(a.seed, "crossval", 0))?;
        (out.best, Some(out))
    } else {
        (GridPoint { mu: a.mu, gamma_multiplier: a.gamma_multiplier }, None)
    };
    let cfg = TrainingConfig {
        allow_zero_mu: a.unsafe_mu_zero,
        ..point.training_config(a.kernel, &solver)
    };
    let out = train_policies(&window, &feeder.transform, &feeder.sens, &cfg)?;
    ensure_parent(&a.out)?;
    write_atomic(&a.out, policies_to_json(&out.policies)?.as_bytes())?;
    println!("objective {:.6e} (fit {:.6e}) with mu {:e}", out.objective, out.fit, point.mu);
    manifest::write(
        &manifest::beside(&a.out),
        "train",
        a,
        &[&a.out],
        json!({
            "mu": point.mu,
            "gamma_multiplier": point.gamma_multiplier,
            "objective": out.objective,
            "fit": out.fit,
            "iterations": out.solution.iterations,
            "cv_scores": cv.map(|c| c.scores),
        }),
    )
}

fn crossval(a: &CrossvalArgs) -> Result<()> {
    let topology = load_feeder(&a.feeder)?;
    let records = load_records(&a.window.timeseries, &topology)?;
    let window = training_window(&records, &topology, &a.window)?;
    let feeder = Feeder::new(topology, a.model.lambda)?;
    let seed = sub_seed(a.seed, "crossval", 0);
    let out = grid_search(&window, &grid(&a.grid), a.kernel, &feeder, &SolverSettings::default(), seed)?;
    ensure_parent(&a.out)?;
    write_atomic(&a.out, cv_report_csv(&out).as_bytes())?;
    println!("best mu {:e}, gamma multiplier {:?}", out.best.mu, out.best.gamma_multiplier);
    manifest::write(
        &manifest::beside(&a.out),
        "crossval",
        a,
        &[&a.out],
        json!({ "fold_seed": seed, "best": out.best }),
    )
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let topology = load_feeder(&a.feeder)?;
    let records = load_records(&a.timeseries, &topology)?;
    let tuning = match (a.mu, a.gamma_multiplier) {
        (Some(mu), Some(g)) => Tuning::Fixed { mu, gamma_multiplier: g },
        _ => Tuning::CrossValidate { grid: grid(&a.grid), once: a.cv_once },
    };
    let config = SimulationConfig {
        window: a.window,
        retrain_period: a.retrain_period,
        lambda: a.model.lambda,
        methods: parse_methods(&a.methods)?,
        selector: a.features.clone(),
        start_min: a.from,
        end_min: a.to,
        tuning,
        seed: a.seed,
        ..Default::default()
    };
    let result = run_simulation(&topology, &records, &config)?;
    ensure_parent(&a.out)?;
    write_atomic(&a.out, cost_gap_csv(&result).as_bytes())?;
    println!(
        "{} steps evaluated, {} excluded, {} report rows",
        result.steps,
        result.excluded_steps,
        result.rows.len()
    );
    manifest::write(
        &manifest::beside(&a.out),
        "simulate",
        &json!({ "args": a, "simulation": config }),
        &[&a.out],
        json!({
            "steps": result.steps,
            "excluded_steps": result.excluded_steps,
            "max_limit_violation": result.max_limit_violation,
            "min_step_gap": result.min_step_gap,
            "selections": result.selections,
        }),
    )
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let topology = load_feeder(&a.feeder)?;
    let n = topology.num_buses();
    let synth_seed = sub_seed(a.seed, "synth", 0);
    let pf_seed = sub_seed(a.seed, "power-factors", 0);
    let mut opts = SynthOptions::default();
    if let Some(v) = a.cloud_noise {
        opts.cloud_noise = v;
    }
    if let Some(v) = a.clear_sky_peak {
        opts.clear_sky_peak = v;
    }
    if let Some(v) = a.load_noise {
        opts.load_noise = v;
    }

    let mut records = match &a.import {
        Some(path) => {
            let recs = load_records(path, &topology)?;
            match &a.benchmark {
                Some(b) => scale_profiles(&recs, a.peak_fraction, &read_benchmark(b, n)?)?,
                None => recs,
            }
        }
        None => synthesize_day(&topology, synth_seed, &opts),
    };
    if !a.keep_reactive {
        records = draw_reactive_loads(&records, (a.pf_min, a.pf_max), pf_seed)?;
    }
    ensure_parent(&a.out)?;
    write_atomic(&a.out, timeseries_csv(&records).as_bytes())?;
    let synth: Option<&SynthOptions> = a.import.is_none().then_some(&opts);
    manifest::write(
        &manifest::beside(&a.out),
        "gen-data",
        &json!({ "args": a, "synthesis": synth }),
        &[&a.out as &Path],
        json!({ "records": records.len(), "synth_seed": synth_seed, "power_factor_seed": pf_seed }),
    )
}

