//! Scenario data: per-minute loads and solar generation, the reactive
//! headroom they leave each inverter, and the feature vectors that feed
//! control rules.

mod features;
mod records;
mod synth;

pub use features::{
    reactive_limit, reactive_limits, select_features, FeatureSelector, FeatureStandardizer, ScenarioWindow, STD_FLOOR,
};
pub use records::{
    apply_power_factors, draw_reactive_loads, load_timeseries, scale_profiles, timeseries_csv, write_timeseries,
    ScenarioRecord, TIMESERIES_HEADER,
};
pub use synth::{clear_sky, synthesize_day, SynthOptions, MINUTES_PER_DAY};
