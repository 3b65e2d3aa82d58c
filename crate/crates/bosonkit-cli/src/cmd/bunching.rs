use std::path::PathBuf;
use std::str::FromStr;

use bosonkit::bunching::{average_generalized_bunching, fermionic_floor, optimal_k};
use bosonkit::hidden_dof::PartitionMixture;
use bosonkit::linopt::SiteList;
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_unitary, to_json, SCHEMA_VERSION};
use crate::model::ModelArg;
use crate::Ctx;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KArg {
    Auto,
    Fixed(usize),
}

impl FromStr for KArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(KArg::Auto);
        }
        s.parse()
            .map(KArg::Fixed)
            .map_err(|_| format!("k must be auto or an integer, got {s:?}"))
    }
}

#[derive(Args, Debug)]
pub struct BunchingArgs {
    #[arg(long)]
    pub unitary: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub input: Vec<usize>,
    #[arg(long)]
    pub model: ModelArg,
    /// Subset size, or auto for round(m − m/n).
    #[arg(long, default_value = "auto")]
    pub k: KArg,
}

#[derive(Serialize)]
struct BunchingOutput {
    schema_version: u32,
    m: usize,
    n: usize,
    k: usize,
    b_k: f64,
    below_n: bool,
    fermionic_floor: f64,
    bosonic_value: f64,
    distinguishable_value: f64,
    dominance_violation: bool,
}

pub fn run(ctx: &Ctx, args: &BunchingArgs) -> CliResult<()> {
    let u = read_unitary(&args.unitary)?;
    let (m, n) = (u.nrows(), args.input.len());
    let i = SiteList(args.input.clone());
    let k = match args.k {
        KArg::Auto => optimal_k(m, n),
        KArg::Fixed(k) => k,
    };
    if k == 0 || k > m {
        return Err(CliError::Input(format!("k = {k} outside 1..={m}")));
    }
    let mix = args.model.resolve(n)?.mixture(n)?;
    let value = |mix: &PartitionMixture| average_generalized_bunching(&u, &i, k, mix);
    let requested = value(&mix)?;
    let bosonic = value(&PartitionMixture::delta(&bosonkit::symrep::Partition::new(vec![n])?)?)?;
    let distinguishable = value(&PartitionMixture::plancherel(n)?)?;
    if requested.below_n {
        eprintln!("warning: k = {k} is below n = {n}; values reported as 0");
    }
    let violation = bosonic.value < distinguishable.value - 1e-12;
    if violation {
        eprintln!(
            "warning: bosonic bunching {} below distinguishable {} (k = {k}, input {:?})",
            bosonic.value, distinguishable.value, args.input
        );
    }
    let out = BunchingOutput {
        schema_version: SCHEMA_VERSION,
        m,
        n,
        k,
        b_k: requested.value,
        below_n: requested.below_n,
        fermionic_floor: fermionic_floor(m, n, k),
        bosonic_value: bosonic.value,
        distinguishable_value: distinguishable.value,
        dominance_violation: violation,
    };
    emit(ctx.out.as_ref(), &to_json(&out))
}
