
use std::path::PathBuf;

use clap::Args;
use svex_core::estimators::post_stratified_detailed;
use svex_core::uncertainty::{
    bootstrap_se, hh_plugin_variance, neyman_sate_var_estimate, BootstrapConfig, CiMethod,
    EstimatorSpec, StrataRecipe,
};
use svex_core::{EstimateReport, ExperimentData, SeMethod, StrataPartition};

use clap::ValueEnum;

use crate::errors::{CliError, CliResult};
use crate::input;
use crate::manifest::RunManifest;
use crate::specs;
use crate::{write_output, CiArg, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeArg {
    /// Case-wise bootstrap (all estimators)
    Bootstrap,
    /// Closed-form plug-in (sate_dm and double_hajek only)
    Plugin,
    /// Point estimates only
    None,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV (header row required)
    #[arg(long)]
    pub input: PathBuf,
    /// Outcome column name
    #[arg(long)]
    pub outcome: String,
    /// Treatment column name (values 0/1)
    #[arg(long)]
    pub treatment: String,
    /// Weight column name (positive; any scale)
    #[arg(long)]
    pub weight: String,
    /// Categorical covariate column to load
    #[arg(long)]
    pub strata: Option<String>,
    /// Estimators to report
    #[arg(long, value_delimiter = ',', default_values_t = ["sate_dm".to_string(), "double_hajek".to_string()])]
    pub estimators: Vec<String>,
    /// Post-stratification recipe: weights:K, covariate:COL, or cross:COL:K
    #[arg(long)]
    pub post_stratify: Option<String>,
    /// Treatment probability for the single-Hajek variants
    #[arg(long)]
    pub p: Option<f64>,
    /// Standard-error method
    #[arg(long, value_enum, default_value_t = SeArg::Bootstrap)]
    pub se: SeArg,
    /// Bootstrap replicates for SEs
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long, value_enum, default_value_t = CiArg::Normal)]
    pub ci_method: CiArg,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Output path (stdout when omitted)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run(args: &EstimateArgs) -> CliResult<()> {
    let recipe = args.post_stratify.as_deref().map(specs::parse_recipe).transpose()?;

    let mut names = args.estimators.clone();
    if recipe.is_some() && !names.iter().any(|n| n.starts_with("ps_")) {
        names.push("ps_double".into());
    }
    let estimators = specs::resolve_estimators(&names, recipe.as_ref(), args.p)?;

    let mut covariate_cols: Vec<String> = Vec::new();
    if let Some(c) = &args.strata {
        covariate_cols.push(c.clone());
    }
    if let Some(c) = recipe.as_ref().and_then(specs::recipe_column) {
        if !covariate_cols.iter().any(|x| x == c) {
            covariate_cols.push(c.to_string());
        }
    }

    let mut needed: Vec<&str> = vec![&args.outcome, &args.treatment, &args.weight];
    needed.extend(covariate_cols.iter().map(String::as_str));
    needed.dedup();
    let table = input::read_table(&args.input, &needed)?;
    let covariates: Vec<(String, Vec<String>)> = covariate_cols
        .iter()
        .map(|c| (c.clone(), table.columns[c].clone()))
        .collect();
    let data = input::build_experiment(
        &table.columns[&args.outcome],
        &table.columns[&args.treatment],
        &table.columns[&args.weight],
        &args.outcome,
        &args.treatment,
        &args.weight,
        &covariates,
    )?;

    let reports = estimate_reports(&data, &estimators, args)?;

    let mut manifest = RunManifest::new("estimate", args.seed);
    manifest.digest_input(&args.input)?;
    let body = match args.format {
        OutputFormat::Csv => reports_csv(&reports),
        OutputFormat::Json => {
            serde_json::to_string_pretty(&reports).map_err(|e| CliError::Internal(e.to_string()))?
                + "\n"
        }
    };
    write_output(args.output.as_deref(), &body, &manifest)
}

pub fn estimate_reports(
    data: &ExperimentData,
    estimators: &[EstimatorSpec],
    args: &EstimateArgs,
) -> CliResult<Vec<EstimateReport>> {
    let cfg = BootstrapConfig {
        replicates: args.bootstrap,
        seed: args.seed,
        ci_level: args.ci_level,
        ci_method: match args.ci_method {
            CiArg::Normal => CiMethod::Normal,
            CiArg::Percentile => CiMethod::Percentile,
        },
    };
    let z = svex_core::uncertainty::normal_quantile((1.0 + args.ci_level) / 2.0);
    // --bootstrap 0 is shorthand for points-only output
    let se_mode = if args.se == SeArg::Bootstrap && args.bootstrap < 2 {
        SeArg::None
    } else {
        args.se
    };
    let mut reports = Vec::new();
    for spec in estimators {
        if let EstimatorSpec::PostStratified { variant, recipe, p } = spec {
            let part = build_partition(data, recipe)?;
            let (_, merges) = post_stratified_detailed(data, &part, *variant, *p)?;
            if merges > 0 {
                eprintln!(
                    "note: {}: {merges} stratum merge(s) applied to keep both arms represented",
                    spec.id()
                );
            }
        }
        let report = match se_mode {
            SeArg::Bootstrap => {
                let out = bootstrap_se(data, spec, &cfg)?;
                if out.redraws > 0 {
                    eprintln!(
                        "note: {}: {} degenerate bootstrap resamples redrawn",
                        spec.id(),
                        out.redraws
                    );
                }
                EstimateReport {
                    estimator: spec.id(),
                    point: out.point,
                    se: Some(out.se),
                    ci_low: Some(out.ci_low),
                    ci_high: Some(out.ci_high),
                    se_method: SeMethod::Bootstrap,
                    n: data.len(),
                    n1: data.n_treated(),
                    n0: data.n_control(),
                }
            }
            SeArg::Plugin => {
                let variance = match spec {
                    EstimatorSpec::SateDm => neyman_sate_var_estimate(data)?,
                    EstimatorSpec::DoubleHajek => hh_plugin_variance(data)?,
                    other => {
                        return Err(CliError::usage(format!(
                            "no plug-in variance for `{}`; use --se bootstrap",
                            other.id()
                        )))
                    }
                };
                let point = spec.evaluate(data)?;
                let se = variance.sqrt();
                EstimateReport {
                    estimator: spec.id(),
                    point,
                    se: Some(se),
                    ci_low: Some(point - z * se),
                    ci_high: Some(point + z * se),
                    se_method: SeMethod::Plugin,
                    n: data.len(),
                    n1: data.n_treated(),
                    n0: data.n_control(),
                }
            }
            SeArg::None => EstimateReport {
                estimator: spec.id(),
                point: spec.evaluate(data)?,
                se: None,
                ci_low: None,
                ci_high: None,
                se_method: SeMethod::None,
                n: data.len(),
                n1: data.n_treated(),
                n0: data.n_control(),
            },
        };
        report.check_invariants()?;
        reports.push(report);
    }
    Ok(reports)
}

fn build_partition(data: &ExperimentData, recipe: &StrataRecipe) -> CliResult<StrataPartition> {
    Ok(match recipe {
        StrataRecipe::WeightQuantiles { k } => StrataPartition::weight_quantiles(data, *k)?,
        StrataRecipe::Covariate { column } => StrataPartition::covariate(data, column)?,
        StrataRecipe::CovariateXWeights { column, k } => {
            StrataPartition::covariate_x_weights(data, column, *k)?
        }
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn reports_csv(reports: &[EstimateReport]) -> String {
    let mut out = String::from("estimator,point,se,ci_low,ci_high,se_method,n,n1,n0\n");
    for r in reports {
        let method = match r.se_method {
            SeMethod::Plugin => "plugin",
            SeMethod::Bootstrap => "bootstrap",
            SeMethod::None => "none",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.estimator,
            r.point,
            opt(r.se),
            opt(r.ci_low),
            opt(r.ci_high),
            method,
            r.n,
            r.n1,
            r.n0
        ));
    }
    out
}

