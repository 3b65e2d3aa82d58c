use std::path::PathBuf;

use bosonkit::design::{design_report, BosonDesign, BosonDesignSpec, DesignOptions, DesignProblem, JacobianFile};
use clap::{ArgGroup, Args};

use crate::error::{CliError, CliResult};
use crate::io::{emit, read_json, read_matrix, to_json};
use crate::Ctx;

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["jacobians", "boson_spec"])))]
pub struct DesignArgs {
    /// Settings with reference probabilities and Jacobians.
    #[arg(long)]
    pub jacobians: Option<PathBuf>,
    /// Inputs, outputs and thermal x for the restricted boson model.
    #[arg(long, requires = "reference")]
    pub boson_spec: Option<PathBuf>,
    /// Reference submatrix or full unitary for --boson-spec.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// JSON array of cost weights on the inferable parameters (default all ones).
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long)]
    pub shots: u64,
}

pub fn run(ctx: &Ctx, args: &DesignArgs) -> CliResult<()> {
    let mut costs: Option<Vec<f64>> = args.costs.as_ref().map(|p| read_json(p)).transpose()?;
    let problem = if let Some(path) = &args.jacobians {
        let file: JacobianFile = read_json(path)?;
        let settings = file.settings.iter().map(|s| s.to_model()).collect::<Result<Vec<_>, _>>()?;
        if costs.is_none() {
            costs = file.costs;
        }
        DesignProblem::new(settings, costs)?
    } else {
        let spec: BosonDesignSpec = read_json(args.boson_spec.as_ref().expect("clap group"))?;
        let reference = read_matrix(args.reference.as_ref().expect("clap requires"))?;
        BosonDesign::new(spec, &reference)?.problem(costs)?
    };
    let report = design_report(&problem, args.shots, &DesignOptions::default())?;
    emit(ctx.out.as_ref(), &to_json(&report))?;
    if ctx.strict && !report.converged {
        return Err(CliError::Numerical("design solver did not converge".into()));
    }
    Ok(())
}
