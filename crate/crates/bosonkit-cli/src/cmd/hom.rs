use std::path::PathBuf;

use bosonkit::bunching::{estimate_hom, HomData, HomOptions};
use bosonkit::stats::{CountsDataset, SettingCounts};
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_json, to_json, SCHEMA_VERSION};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct HomArgs {
    /// Single-particle counts files for the two inputs.
    #[arg(long, num_args = 2, required = true)]
    pub singles: Vec<PathBuf>,
    /// Two-particle counts file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Calibration τ; without it only the lower bound 1 − Q is reported.
    #[arg(long)]
    pub tau: Option<f64>,
    /// First output set.
    #[arg(long, value_delimiter = ',', required = true)]
    pub s1: Vec<usize>,
    /// Second output set.
    #[arg(long, value_delimiter = ',', required = true)]
    pub s2: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    /// Required with --bootstrap.
    #[arg(long)]
    pub seed: Option<u64>,
    /// One-sided level; the interval has coverage 1 − 2α.
    #[arg(long, default_value_t = 0.16)]
    pub alpha: f64,
}

#[derive(Serialize)]
struct HomOutput {
    schema_version: u32,
    #[serde(rename = "I")]
    indist: Option<f64>,
    interval: Option<(f64, f64)>,
    #[serde(rename = "I_lower_bound")]
    lower_bound: f64,
    lower_bound_interval: Option<(f64, f64)>,
    tau: Option<f64>,
    q: f64,
    q_plugin: f64,
    loss: f64,
    vacuum_estimate: Option<f64>,
    bootstrap: usize,
    alpha: f64,
    degenerate: bool,
}

fn single_setting(d: &CountsDataset, particles: usize, path: &std::path::Path) -> CliResult<SettingCounts> {
    d.settings
        .iter()
        .find(|s| s.prepared_sites.len() == particles)
        .cloned()
        .ok_or_else(|| CliError::Input(format!("{}: no {particles}-particle setting", path.display())))
}

pub fn run(ctx: &Ctx, args: &HomArgs) -> CliResult<()> {
    if args.bootstrap > 0 && args.seed.is_none() {
        return Err(CliError::Input("--bootstrap needs --seed".into()));
    }
    let files: Vec<(CountsDataset, &PathBuf)> = [&args.singles[0], &args.singles[1], &args.pairs]
        .into_iter()
        .map(|p| {
            let d: CountsDataset = read_json(p)?;
            d.validate()?;
            Ok((d, p))
        })
        .collect::<CliResult<_>>()?;
    if files.iter().any(|(d, _)| d.modes != files[0].0.modes) {
        return Err(CliError::Input("datasets do not share a mode count".into()));
    }
    let a = single_setting(&files[0].0, 1, files[0].1)?;
    let b = single_setting(&files[1].0, 1, files[1].1)?;
    let pairs = single_setting(&files[2].0, 2, files[2].1)?;
    let mut expected = vec![a.prepared_sites[0], b.prepared_sites[0]];
    expected.sort_unstable();
    let mut prepared = pairs.prepared_sites.clone();
    prepared.sort_unstable();
    if expected != prepared || expected[0] == expected[1] {
        return Err(CliError::Input(format!(
            "pair setting {:?} does not match the single inputs {:?}",
            pairs.prepared_sites, expected
        )));
    }
    let m = files[0].0.modes;
    if args.s1.iter().chain(&args.s2).any(|&s| s == 0 || s > m) {
        return Err(CliError::Input(format!("output sets must lie in 1..={m}")));
    }
    let data = HomData {
        single_a: a,
        single_b: b,
        pairs,
    };
    let opts = HomOptions {
        s1: args.s1.clone(),
        s2: args.s2.clone(),
        tau: args.tau,
        bootstrap: args.bootstrap,
        seed: args.seed.unwrap_or(0),
        alpha: args.alpha,
    };
    let est = estimate_hom(&data, &opts)?;
    let out = HomOutput {
        schema_version: SCHEMA_VERSION,
        indist: est.indist,
        interval: est.indist_interval,
        lower_bound: est.lower_bound,
        lower_bound_interval: est.lower_bound_interval,
        tau: args.tau,
        q: est.q,
        q_plugin: est.q_plugin,
        loss: est.loss,
        vacuum_estimate: est.vacuum_estimate,
        bootstrap: args.bootstrap,
        alpha: args.alpha,
        degenerate: est.degenerate,
    };
    emit(ctx.out.as_ref(), &to_json(&out))
}
