use std::path::PathBuf;
use std::str::FromStr;

use bosonkit::hidden_dof::{thermal_partition_weights, AuxiliaryClassFunction, PartitionMixture};
use bosonkit::symrep::Partition;

use crate::error::{CliError, CliResult};
use crate::io::read_json;

/// `--model` argument as typed.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelArg {
    Bosonic,
    Distinguishable,
    Thermal(f64),
    Mixture(PathBuf),
}

impl FromStr for ModelArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bosonic" => return Ok(ModelArg::Bosonic),
            "distinguishable" => return Ok(ModelArg::Distinguishable),
            _ => {}
        }
        if let Some(x) = s.strip_prefix("thermal:") {
            let x: f64 = x.parse().map_err(|_| format!("bad thermal parameter {x:?}"))?;
            return Ok(ModelArg::Thermal(x));
        }
        if let Some(p) = s.strip_prefix("mixture:") {
            return Ok(ModelArg::Mixture(PathBuf::from(p)));
        }
        Err(format!(
            "unknown model {s:?}; expected bosonic, distinguishable, thermal:x or mixture:file"
        ))
    }
}

/// A model resolved for `n` particles.
///
/// `thermal:0` resolves to [`Model::Bosonic`], so its tables use the permanent route.
#[derive(Clone, Debug)]
pub enum Model {
    Bosonic,
    Distinguishable,
    Mixture(PartitionMixture),
}

impl ModelArg {
    pub fn resolve(&self, n: usize) -> CliResult<Model> {
        Ok(match self {
            ModelArg::Bosonic => Model::Bosonic,
            ModelArg::Distinguishable => Model::Distinguishable,
            ModelArg::Thermal(x) if *x == 0.0 => Model::Bosonic,
            ModelArg::Thermal(x) => Model::Mixture(thermal_partition_weights(*x, n)?),
            ModelArg::Mixture(path) => {
                let mix: PartitionMixture = read_json(path)?;
                if mix.n != n {
                    return Err(CliError::Input(format!("mixture is for {} particles, input has {n}", mix.n)));
                }
                Model::Mixture(mix)
            }
        })
    }
}

impl Model {
    pub fn mixture(&self, n: usize) -> CliResult<PartitionMixture> {
        Ok(match self {
            Model::Bosonic => PartitionMixture::delta(&Partition::new(vec![n])?)?,
            Model::Distinguishable => PartitionMixture::plancherel(n)?,
            Model::Mixture(m) => m.clone(),
        })
    }

    pub fn class_function(&self, n: usize) -> CliResult<AuxiliaryClassFunction> {
        Ok(match self {
            Model::Bosonic => AuxiliaryClassFunction::indistinguishable(n)?,
            Model::Distinguishable => AuxiliaryClassFunction::distinguishable(n)?,
            Model::Mixture(m) => AuxiliaryClassFunction::from_mixture(m)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_model_names() {
        assert_eq!("bosonic".parse::<ModelArg>().unwrap(), ModelArg::Bosonic);
        assert_eq!("thermal:0.25".parse::<ModelArg>().unwrap(), ModelArg::Thermal(0.25));
        assert_eq!("mixture:a.json".parse::<ModelArg>().unwrap(), ModelArg::Mixture("a.json".into()));
        assert!("fermionic".parse::<ModelArg>().is_err());
        assert!("thermal:abc".parse::<ModelArg>().is_err());
    }

    #[test]
    fn thermal_zero_is_bosonic() {
        assert!(matches!(ModelArg::Thermal(0.0).resolve(3).unwrap(), Model::Bosonic));
        assert!(matches!(ModelArg::Thermal(0.5).resolve(3).unwrap(), Model::Mixture(_)));
        assert!(ModelArg::Thermal(1.0).resolve(3).is_err());
    }
}
