use bosonkit::hidden_dof::{thermal_limit_exact, thermal_partition_weights};
use clap::Args;

use crate::error::{CliError, CliResult};
use crate::io::{emit, parse_grid, tuple, Csv};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct WeightsArgs {
    #[arg(long)]
    pub n: usize,
    /// lo:hi:points with 0 ≤ lo ≤ hi ≤ 1.
    #[arg(long)]
    pub x_grid: String,
}

/// Columns `x, lambda, p, p_x1, p_x1_exact`; the last two are the `x → 1` limit.
/// A grid point at exactly `x = 1` reports the limit in `p`.
pub fn run(ctx: &Ctx, args: &WeightsArgs) -> CliResult<()> {
    let grid = parse_grid(&args.x_grid)?;
    if grid.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(CliError::Input("x must lie in [0, 1]".into()));
    }
    let limit = thermal_limit_exact(args.n)?;
    let mut csv = Csv::new(&["x", "lambda", "p", "p_x1", "p_x1_exact"]);
    for &x in &grid {
        let weights = if x < 1.0 {
            Some(thermal_partition_weights(x, args.n)?)
        } else {
            None
        };
        for (k, (lambda, exact)) in limit.iter().enumerate() {
            let endpoint = *exact.numer() as f64 / *exact.denom() as f64;
            let p = weights.as_ref().map_or(endpoint, |w| w.weights[k].1);
            csv.row(&[
                x.to_string(),
                tuple(lambda.parts()),
                p.to_string(),
                endpoint.to_string(),
                exact.to_string(),
            ]);
        }
    }
    emit(ctx.out.as_ref(), &csv.finish())
}
