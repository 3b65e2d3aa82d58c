use bosonkit::error_model::{fidelity_lower_bound, DephasingParams};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{emit, parse_int_grid, to_json, Csv, SCHEMA_VERSION};
use crate::Ctx;

const NOTE: &str = "ordinary reading uses the phase n*sigma*W*t; angular reading uses 2*pi*n*sigma*W*t (W given in cycles per unit time)";

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    /// Particle number.
    #[arg(long, required_unless_present = "n_grid")]
    pub n: Option<usize>,
    /// lo:hi:step over particle numbers.
    #[arg(long, conflicts_with = "n")]
    pub n_grid: Option<String>,
    /// Relative standard deviation of the laser power.
    #[arg(long)]
    pub sigma: f64,
    /// Single-particle bandwidth W.
    #[arg(long)]
    pub bandwidth: f64,
    #[arg(long)]
    pub t: f64,
    /// Treat the bandwidth as an ordinary frequency and convert it to angular.
    #[arg(long)]
    pub angular: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Serialize)]
struct BoundPoint {
    n: usize,
    bound: f64,
    bound_other_reading: f64,
}

#[derive(Serialize)]
struct BoundOutput {
    schema_version: u32,
    reading: &'static str,
    sigma: f64,
    bandwidth: f64,
    t: f64,
    note: &'static str,
    #[serde(flatten)]
    single: Option<BoundPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<Vec<BoundPoint>>,
}

pub fn run(ctx: &Ctx, args: &BoundArgs) -> CliResult<()> {
    DephasingParams::from_bandwidth(args.sigma, args.t, args.bandwidth, 1)?;
    let angular_w = 2.0 * std::f64::consts::PI * args.bandwidth;
    let (w, w_other) = if args.angular {
        (angular_w, args.bandwidth)
    } else {
        (args.bandwidth, angular_w)
    };
    let point = |n| BoundPoint {
        n,
        bound: fidelity_lower_bound(n, args.sigma, w, args.t),
        bound_other_reading: fidelity_lower_bound(n, args.sigma, w_other, args.t),
    };
    let ns = match (&args.n_grid, args.n) {
        (Some(g), _) => parse_int_grid(g)?,
        (None, Some(n)) => vec![n],
        (None, None) => return Err(CliError::Input("need --n or --n-grid".into())),
    };
    let points: Vec<BoundPoint> = ns.into_iter().map(point).collect();
    let text = match args.format {
        Format::Csv => {
            let mut csv = Csv::new(&["n", "bound", "bound_other_reading"]);
            for p in &points {
                csv.row(&[p.n.to_string(), p.bound.to_string(), p.bound_other_reading.to_string()]);
            }
            csv.finish()
        }
        Format::Json => {
            let (single, grid) = if args.n_grid.is_some() {
                (None, Some(points))
            } else {
                (points.into_iter().next(), None)
            };
            to_json(&BoundOutput {
                schema_version: SCHEMA_VERSION,
                reading: if args.angular { "angular" } else { "ordinary" },
                sigma: args.sigma,
                bandwidth: args.bandwidth,
                t: args.t,
                note: NOTE,
                single,
                grid,
            })
        }
    };
    emit(ctx.out.as_ref(), &text)
}
