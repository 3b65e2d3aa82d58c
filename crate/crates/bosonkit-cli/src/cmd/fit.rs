use std::path::PathBuf;

use bosonkit::design::{max_tvd, mle_fit, FitOptions, TwoParticleModel};
use bosonkit::linopt::{coeffs_from_unitary, spectral_norm, submatrix, unitarity_defect, unitary_completion, MatrixFile, SiteList};
use bosonkit::stats::{CountsDataset, SettingCounts};
use bosonkit::{CMatrix, Complex64};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_json, read_matrix, to_json, write_file, Csv, SCHEMA_VERSION};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Counts dataset with single- and two-particle settings.
    #[arg(long)]
    pub data: PathBuf,
    /// Initial |S|×|I| submatrix, or a full unitary of side |S|+|I|.
    #[arg(long)]
    pub init: PathBuf,
    /// Fixed indistinguishability.
    #[arg(long)]
    pub indist: f64,
    /// Input sites (default: every prepared site in the data).
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<usize>>,
    /// Output sites (default: every other site).
    #[arg(long, value_delimiter = ',')]
    pub outputs: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    /// Required with --bootstrap.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write a histogram of the bootstrap max-TVD values here.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
}

#[derive(Serialize)]
struct FitOutput {
    schema_version: u32,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    submatrix: MatrixFile,
    loss: f64,
    indist: f64,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    init_rescaled: bool,
    max_tvd_to_init: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap_max_tvd: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap_unconverged: Option<usize>,
}

fn site_lists(args: &FitArgs, data: &CountsDataset) -> (Vec<usize>, Vec<usize>) {
    let inputs = args.inputs.clone().unwrap_or_else(|| {
        let mut v: Vec<usize> = data.settings.iter().flat_map(|s| s.prepared_sites.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    });
    let outputs = args
        .outputs
        .clone()
        .unwrap_or_else(|| (1..=data.modes).filter(|s| !inputs.contains(s)).collect());
    (inputs, outputs)
}

/// Starting submatrix (rescaled into the unit ball when needed) and its unitary completion.
fn initial_point(init: &CMatrix, s: usize, i: usize) -> CliResult<(CMatrix, CMatrix, bool)> {
    let d = s + i;
    if init.shape() == (d, d) && (s, i) != (d, d) {
        if unitarity_defect(init) > 1e-10 {
            return Err(CliError::Input("square initial matrix is not unitary".into()));
        }
        let rows = SiteList((1..=s).collect());
        let cols = SiteList((1..=i).collect());
        return Ok((submatrix(init, &rows, &cols)?, init.clone(), false));
    }
    if init.shape() != (s, i) {
        return Err(CliError::Input(format!("initial matrix must be {s}x{i} or {d}x{d}")));
    }
    let norm = spectral_norm(init);
    let (m0, rescaled) = if norm > 1.0 {
        (init / Complex64::new(norm, 0.0), true)
    } else {
        (init.clone(), false)
    };
    let u = unitary_completion(&m0)?;
    Ok((m0, u, rescaled))
}

fn histogram(values: &[f64], bins: usize) -> String {
    let hi = values.iter().copied().fold(0.0f64, f64::max);
    let width = if hi > 0.0 { hi / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[((v / width) as usize).min(bins - 1)] += 1;
    }
    let mut csv = Csv::new(&["bin_lo", "bin_hi", "count"]);
    for (b, c) in counts.iter().enumerate() {
        csv.row(&[(b as f64 * width).to_string(), ((b + 1) as f64 * width).to_string(), c.to_string()]);
    }
    csv.finish()
}

pub fn run(ctx: &Ctx, args: &FitArgs) -> CliResult<()> {
    if args.bootstrap > 0 && args.seed.is_none() {
        return Err(CliError::Input("--bootstrap needs --seed".into()));
    }
    if args.bins == 0 {
        return Err(CliError::Input("--bins must be positive".into()));
    }
    let data: CountsDataset = read_json(&args.data)?;
    data.validate()?;
    let (inputs, outputs) = site_lists(args, &data);
    let init = read_matrix(&args.init)?;
    let (m0, u0, init_rescaled) = initial_point(&init, outputs.len(), inputs.len())?;
    let opts = FitOptions {
        max_iter: args.max_iter,
        ..FitOptions::default()
    };
    let fit = mle_fit(&data, &inputs, &outputs, &coeffs_from_unitary(&u0)?, args.indist, &opts)?;
    let settings = fit.model.settings();
    let init_model = TwoParticleModel::new(m0, fit.model.loss, args.indist, inputs.clone(), outputs.clone())?;
    let max_tvd_to_init = max_tvd(&fit.model, &init_model, &settings)?;

    let (mut boot, mut unconverged) = (None, None);
    if args.bootstrap > 0 {
        let seed = args.seed.expect("checked above");
        let runs = (0..args.bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                let settings = data
                    .settings
                    .iter()
                    .map(|s| SettingCounts::from_table(s.prepared_sites.clone(), &s.table().resample(&mut rng)))
                    .collect();
                let resampled = CountsDataset { settings, ..data.clone() };
                let refit = mle_fit(&resampled, &inputs, &outputs, &fit.coeffs, args.indist, &opts)?;
                Ok((max_tvd(&refit.model, &fit.model, &fit.model.settings())?, refit.converged))
            })
            .collect::<Result<Vec<(f64, bool)>, bosonkit::Error>>()?;
        let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
        if let Some(path) = &args.histogram {
            write_file(path, &histogram(&values, args.bins))?;
        }
        unconverged = Some(runs.iter().filter(|r| !r.1).count());
        boot = Some(values);
    }

    let out = FitOutput {
        schema_version: SCHEMA_VERSION,
        inputs,
        outputs,
        submatrix: MatrixFile::from_matrix(&fit.model.m, false),
        loss: fit.model.loss,
        indist: args.indist,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        converged: fit.converged,
        init_rescaled,
        max_tvd_to_init,
        bootstrap_max_tvd: boot,
        bootstrap_unconverged: unconverged,
    };
    emit(ctx.out.as_ref(), &to_json(&out))?;
    if ctx.strict && (!fit.converged || unconverged.is_some_and(|u| u > 0)) {
        return Err(CliError::Numerical("maximum-likelihood fit did not converge".into()));
    }
    Ok(())
}
