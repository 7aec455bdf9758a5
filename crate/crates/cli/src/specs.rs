//! Estimator name and recipe parsing shared by the subcommands.

use svex_core::estimators::PsVariant;
use svex_core::uncertainty::{EstimatorSpec, StrataRecipe};
use svex_core::EstimatorId;

use crate::errors::{CliError, CliResult};

/// Parse `weights:K`, `covariate:COL`, or `cross:COL:K`.
pub fn parse_recipe(text: &str) -> CliResult<StrataRecipe> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["weights", k] => Ok(StrataRecipe::WeightQuantiles {
            k: parse_k(k, text)?,
        }),
        ["covariate", column] => Ok(StrataRecipe::Covariate {
            column: column.to_string(),
        }),
        ["cross", column, k] => Ok(StrataRecipe::CovariateXWeights {
            column: column.to_string(),
            k: parse_k(k, text)?,
        }),
        _ => Err(CliError::usage(format!(
            "bad post-stratification recipe `{text}` (expected weights:K, covariate:COL, or cross:COL:K)"
        ))),
    }
}

fn parse_k(k: &str, recipe: &str) -> CliResult<usize> {
    k.parse::<usize>()
        .ok()
        .filter(|&k| k >= 1)
        .ok_or_else(|| CliError::usage(format!("bad stratum count in recipe `{recipe}`")))
}

/// Covariate column referenced by a recipe, if any.
pub fn recipe_column(recipe: &StrataRecipe) -> Option<&str> {
    match recipe {
        StrataRecipe::WeightQuantiles { .. } => None,
        StrataRecipe::Covariate { column } | StrataRecipe::CovariateXWeights { column, .. } => {
            Some(column)
        }
    }
}

/// Resolve estimator names into executable specs. Post-stratified names
/// need `recipe`; `p` feeds the single-Hajek variants.
pub fn resolve_estimators(
    names: &[String],
    recipe: Option<&StrataRecipe>,
    p: Option<f64>,
) -> CliResult<Vec<EstimatorSpec>> {
    let mut specs = Vec::new();
    for name in names {
        let id = EstimatorId::parse(name)
            .ok_or_else(|| CliError::usage(format!("unknown estimator `{name}`")))?;
        let spec = match id {
            EstimatorId::SateDm => EstimatorSpec::SateDm,
            EstimatorId::HajekMean => EstimatorSpec::HajekMean,
            EstimatorId::HtMean => EstimatorSpec::HtMean,
            EstimatorId::DoubleHajek => EstimatorSpec::DoubleHajek,
            EstimatorId::SingleHajek => EstimatorSpec::SingleHajek { p },
            EstimatorId::TauSd => EstimatorSpec::TauSd,
            EstimatorId::PsDouble | EstimatorId::PsSingle => {
                let recipe = recipe.cloned().ok_or_else(|| {
                    CliError::usage(format!(
                        "estimator `{name}` needs --post-stratify (weights:K, covariate:COL, or cross:COL:K)"
                    ))
                })?;
                let variant = if id == EstimatorId::PsDouble {
                    PsVariant::Double
                } else {
                    PsVariant::Single
                };
                EstimatorSpec::PostStratified {
                    variant,
                    recipe,
                    p: if id == EstimatorId::PsSingle { p } else { None },
                }
            }
        };
        if !specs.contains(&spec) {
            specs.push(spec);
        }
    }
    if specs.is_empty() {
        return Err(CliError::usage("no estimators requested"));
    }
    Ok(specs)
}
