use std::path::PathBuf;

use bosonkit::hidden_dof::{mixture_probability, restricted_outcomes, restricted_probability_class};
use bosonkit::linopt::{all_occupations, bosonic_probability, distinguishable_probability, submatrix, zeta, OccupationList, SiteList};
use bosonkit::stats::{multinomial, CountsDataset, OutcomeCount, OutcomeLabel, SettingCounts};
use bosonkit::CMatrix;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_unitary, to_json, tuple, Csv};
use crate::model::{Model, ModelArg};
use crate::Ctx;

/// Largest outcome table emitted without `--force`.
pub const TABLE_CAP: f64 = 1e6;

#[derive(Args, Debug)]
pub struct DistArgs {
    /// Unitary matrix file.
    #[arg(long)]
    pub unitary: PathBuf,
    /// Input sites (1-based, comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub input: Vec<usize>,
    /// bosonic, distinguishable, thermal:x or mixture:file.
    #[arg(long)]
    pub model: ModelArg,
    /// Report occupation patterns on these output sites only.
    #[arg(long, value_delimiter = ',')]
    pub restrict: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub shots: u64,
    /// ChaCha8 seed.
    #[arg(long)]
    pub seed: u64,
}

/// Outcome table: full occupation lists, or patterns on the restricted sites.
pub struct Table {
    pub modes: usize,
    pub restrict: Option<Vec<usize>>,
    pub outcomes: Vec<OccupationList>,
    pub probs: Vec<f64>,
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

pub fn table(ctx: &Ctx, args: &DistArgs) -> CliResult<Table> {
    let u = read_unitary(&args.unitary)?;
    let m = u.nrows();
    let n = args.input.len();
    let i = SiteList(args.input.clone());
    if n == 0 || args.input.iter().any(|&s| s == 0 || s > m) {
        return Err(CliError::Input(format!("input sites must lie in 1..={m}")));
    }
    let model = args.model.resolve(n)?;
    let (outcomes, probs) = match &args.restrict {
        None => full_table(ctx, &u, &i, &model)?,
        Some(s) => restricted_table(ctx, &u, &i, s, &model)?,
    };
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CliError::Numerical(format!("probabilities sum to {total}")));
    }
    Ok(Table {
        modes: m,
        restrict: args.restrict.clone(),
        outcomes,
        probs,
    })
}

fn check_size(ctx: &Ctx, rows: f64) -> CliResult<()> {
    if rows > TABLE_CAP && !ctx.force {
        return Err(CliError::SizeCap(format!(
            "{rows:.3e} outcomes exceed {TABLE_CAP:.0e}; pass --force"
        )));
    }
    Ok(())
}

fn full_table(ctx: &Ctx, u: &CMatrix, i: &SiteList, model: &Model) -> CliResult<(Vec<OccupationList>, Vec<f64>)> {
    let (m, n) = (u.nrows(), i.len());
    check_size(ctx, binomial_f64(m + n - 1, n))?;
    let outcomes = all_occupations(m, n);
    let probs = outcomes
        .par_iter()
        .map(|g| match model {
            Model::Bosonic => bosonic_probability(u, i, g),
            Model::Distinguishable => distinguishable_probability(u, i, g),
            Model::Mixture(mix) => mixture_probability(mix, u, i, g),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok((outcomes, probs))
}

fn restricted_table(ctx: &Ctx, u: &CMatrix, i: &SiteList, s: &[usize], model: &Model) -> CliResult<(Vec<OccupationList>, Vec<f64>)> {
    let (m, n) = (u.nrows(), i.len());
    if s.is_empty() || s.iter().any(|&x| x == 0 || x > m) || (1..s.len()).any(|a| s[..a].contains(&s[a])) {
        return Err(CliError::Input(format!("restricted sites must be distinct and lie in 1..={m}")));
    }
    check_size(ctx, binomial_f64(s.len() + n, n))?;
    let sub = submatrix(u, &SiteList(s.to_vec()), i)?;
    let k = model.class_function(n)?;
    let outcomes = restricted_outcomes(s.len(), n);
    let probs = outcomes
        .par_iter()
        .map(|h| restricted_probability_class(&sub, &k, h))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok((outcomes, probs))
}

pub fn simulate(ctx: &Ctx, args: &DistArgs) -> CliResult<()> {
    let t = table(ctx, args)?;
    let mut csv = Csv::new(&["outcome", "probability"]);
    for (g, p) in t.outcomes.iter().zip(&t.probs) {
        csv.row(&[tuple(&g.0), p.to_string()]);
    }
    emit(ctx.out.as_ref(), &csv.finish())
}

/// Label of an outcome row: occupied sites with multiplicity; on a restricted table the
/// all-zero pattern (every particle outside) is `other`.
fn label(t: &Table, g: &OccupationList) -> OutcomeLabel {
    let sites = zeta(g).0;
    match &t.restrict {
        None => OutcomeLabel::Sites(sites),
        Some(_) if sites.is_empty() => OutcomeLabel::Other,
        Some(s) => {
            let mut mapped: Vec<usize> = sites.iter().map(|&k| s[k - 1]).collect();
            mapped.sort_unstable();
            OutcomeLabel::Sites(mapped)
        }
    }
}

pub fn sample(ctx: &Ctx, args: &SampleArgs) -> CliResult<()> {
    let t = table(ctx, &args.dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let probs: Vec<f64> = t.probs.iter().map(|p| p.max(0.0)).collect();
    let counts = multinomial(args.shots, &probs, &mut rng);
    let outcomes = t
        .outcomes
        .iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(g, count)| OutcomeCount {
            label: label(&t, g),
            count,
        })
        .collect();
    let setting = SettingCounts {
        prepared_sites: args.dist.input.clone(),
        outcomes,
    };
    let data = CountsDataset::new(t.modes, vec![setting])?;
    emit(ctx.out.as_ref(), &to_json(&data))
}
