use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Deserialize;
use svex_core::design::{derive_seed, substream_rng};
use svex_core::simulation::{
    gamma_sweep, generate_population, run_study, DgpConfig, EffectKind, StudyConfig, StudySummary,
    SweepResult,
};
use svex_core::uncertainty::{EstimatorSpec, StrataRecipe};
use svex_core::AssignmentPlan;

use crate::errors::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::specs;
use crate::write_output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Heterogeneous effect tied to the weights (gamma = 1)
    #[value(name = "A", alias = "a")]
    A,
    /// Constant effect of 30 on the same population structure
    #[value(name = "B", alias = "b")]
    B,
    /// Sweep of the latent weight-outcome correlation
    #[value(name = "C", alias = "c")]
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssignArg {
    Bernoulli,
    Complete,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario
    #[arg(long, value_enum, conflicts_with = "config")]
    pub scenario: Option<Scenario>,
    /// Scenario configuration file (TOML); every key can be overridden by a
    /// flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample size drawn per replication
    #[arg(long)]
    pub sample_n: Option<usize>,
    #[arg(long)]
    pub pop_size: Option<usize>,
    /// Latent weight-outcome correlation (scenarios A/B)
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Sweep grid (scenario C)
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Populations per gamma in a sweep
    #[arg(long)]
    pub populations: Option<usize>,
    /// Weight-quantile strata for the post-stratified estimator
    #[arg(long)]
    pub strata: Option<usize>,
    /// Bootstrap replicates per Monte Carlo replication (0 disables)
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub assignment: Option<AssignArg>,
    /// Treatment probability
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub weight_min: Option<f64>,
    #[arg(long)]
    pub weight_max: Option<f64>,
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// `heterogeneous` or `constant:VALUE`
    #[arg(long)]
    pub effect: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    /// Output CSV path (summary rows, or sweep rows for scenario C)
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    population: Option<DgpConfig>,
    study: Option<StudyFile>,
    bootstrap: Option<BootstrapFile>,
    sweep: Option<SweepFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct StudyFile {
    sample_size: usize,
    replications: usize,
    strata: usize,
    seed: u64,
    estimators: Vec<String>,
    assignment: AssignmentPlan,
}

impl Default for StudyFile {
    fn default() -> Self {
        Self {
            sample_size: 500,
            replications: 10_000,
            strata: 7,
            seed: 0,
            estimators: vec![
                "sate_dm".into(),
                "double_hajek".into(),
                "ps_double".into(),
            ],
            assignment: AssignmentPlan::Bernoulli { p: 0.5 },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct BootstrapFile {
    replicates: usize,
    ci_level: f64,
}

impl Default for BootstrapFile {
    fn default() -> Self {
        Self {
            replicates: 400,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SweepFile {
    gammas: Vec<f64>,
    populations_per_gamma: usize,
}

impl Default for SweepFile {
    fn default() -> Self {
        Self {
            gammas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            populations_per_gamma: 20,
        }
    }
}

struct Resolved {
    dgp: DgpConfig,
    study: StudyConfig,
    study_seed_root: u64,
    sweep: Option<SweepFile>,
    label: String,
}

fn parse_effect(text: &str) -> CliResult<EffectKind> {
    if text == "heterogeneous" {
        return Ok(EffectKind::Heterogeneous);
    }
    if let Some(v) = text.strip_prefix("constant:") {
        let value: f64 = v
            .parse()
            .map_err(|_| CliError::usage(format!("bad effect value in `{text}`")))?;
        return Ok(EffectKind::Constant { value });
    }
    Err(CliError::usage(format!(
        "bad effect `{text}` (expected `heterogeneous` or `constant:VALUE`)"
    )))
}

fn resolve(args: &SimulateArgs) -> CliResult<Resolved> {
    let mut file = ConfigFile::default();
    let mut label = String::from("custom");
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        file = toml::from_str(&text)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or(label);
    }
    let mut dgp = file.population.unwrap_or_default();
    let study_file = file.study.unwrap_or_default();
    let bootstrap_file = file.bootstrap.unwrap_or_default();
    let mut sweep = file.sweep;

    match args.scenario {
        Some(Scenario::A) => {
            dgp.gamma = 1.0;
            dgp.effect = EffectKind::Heterogeneous;
            label = "A".into();
        }
        Some(Scenario::B) => {
            dgp.gamma = 1.0;
            dgp.effect = EffectKind::Constant { value: 30.0 };
            label = "B".into();
        }
        Some(Scenario::C) => {
            sweep = Some(sweep.unwrap_or_default());
            label = "C".into();
        }
        None => {}
    }

    if let Some(v) = args.pop_size {
        dgp.population_size = v;
    }
    if let Some(v) = args.gamma {
        dgp.gamma = v;
    }
    if let Some(v) = args.weight_min {
        dgp.weight_min = v;
    }
    if let Some(v) = args.weight_max {
        dgp.weight_max = v;
    }
    if let Some(v) = args.noise_sd {
        dgp.noise_sd = v;
    }
    if let Some(text) = &args.effect {
        dgp.effect = parse_effect(text)?;
    }

    let sample_size = args.sample_n.unwrap_or(study_file.sample_size);
    dgp.target_sample_size = sample_size;
    let strata = args.strata.unwrap_or(study_file.strata);
    let seed = args.seed.unwrap_or(study_file.seed);

    let assignment = match (args.assignment, args.p) {
        (None, None) => study_file.assignment,
        (mechanism, p) => {
            let p = p.unwrap_or(study_file.assignment.p());
            match mechanism {
                Some(AssignArg::Complete) => AssignmentPlan::complete(p)?,
                Some(AssignArg::Bernoulli) => AssignmentPlan::bernoulli(p)?,
                None => match study_file.assignment {
                    AssignmentPlan::Bernoulli { .. } => AssignmentPlan::bernoulli(p)?,
                    AssignmentPlan::Complete { .. } => AssignmentPlan::complete(p)?,
                },
            }
        }
    };

    let names = args.estimators.clone().unwrap_or(study_file.estimators);
    let recipe = StrataRecipe::WeightQuantiles { k: strata };
    let estimators = specs::resolve_estimators(&names, Some(&recipe), None)?;
    for spec in &estimators {
        if let EstimatorSpec::PostStratified { recipe, .. } = spec {
            if specs::recipe_column(recipe).is_some() {
                return Err(CliError::usage(
                    "covariate recipes are not available in simulations (no covariates are generated)",
                ));
            }
        }
    }

    if let Some(v) = args.gammas.clone() {
        sweep.get_or_insert_with(SweepFile::default).gammas = v;
    }
    if let Some(v) = args.populations {
        sweep.get_or_insert_with(SweepFile::default).populations_per_gamma = v;
    }

    let study = StudyConfig {
        sample_size,
        assignment,
        replications: args.reps.unwrap_or(study_file.replications),
        estimators,
        bootstrap_replicates: args.bootstrap.unwrap_or(bootstrap_file.replicates),
        ci_level: bootstrap_file.ci_level,
        seed: derive_seed(seed, 1),
    };
    Ok(Resolved {
        dgp,
        study,

        study_seed_root: seed,
        sweep,
        label,
    })
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let resolved = resolve(args)?;
    let mut manifest = RunManifest::new("simulate", resolved.study_seed_root);
    if let Some(path) = &args.config {
        manifest.digest_input(path)?;
    }

    match &resolved.sweep {
        None => {
            let mut pop_rng = substream_rng(resolved.study_seed_root, 0);
            let pop = generate_population(&resolved.dgp, &mut pop_rng)?;
            let summary = run_study(&pop, &resolved.study)?;
            print!("{}", render_summary(&resolved, &summary));
            let body = summary_csv(&resolved.label, &summary);
            if args.output.is_some() {
                write_output(args.output.as_deref(), &body, &manifest)?;
            }
            Ok(())
        }
        Some(sweep) => {
            let study = StudyConfig {
                seed: resolved.study_seed_root,
                ..resolved.study.clone()
            };
            let result = gamma_sweep(&resolved.dgp, &study, &sweep.gammas, sweep.populations_per_gamma)?;
            print!("{}", render_sweep(&sweep.gammas, &resolved.study, &result));
            let body = sweep_csv(&result);
            if args.output.is_some() {
                write_output(args.output.as_deref(), &body, &manifest)?;
            }
            Ok(())
        }
    }
}

fn fmt_cell(v: Option<f64>, pct: bool) -> String {
    match v {
        None => "-".into(),
        Some(v) if pct => format!("{:.1}%", v * 100.0),
        Some(v) => format!("{v:.3}"),
    }
}

fn render_summary(resolved: &Resolved, summary: &StudySummary) -> String {
    let mut out = String::new();
    let effect = match resolved.dgp.effect {
        EffectKind::Heterogeneous => "heterogeneous effect".to_string(),
        EffectKind::Constant { value } => format!("constant effect {value}"),
    };
    let _ = writeln!(
        out,
        "scenario {} ({effect}, gamma = {}): tau = {:.3}, N = {}, n = {}, reps = {}, B = {}",
        resolved.label,
        resolved.dgp.gamma,
        summary.tau,
        resolved.dgp.population_size,
        summary.sample_size,
        summary.replications,
        resolved.study.bootstrap_replicates,
    );
    let _ = writeln!(
        out,
        "{:<14} {:>9} {:>8} {:>7} {:>7} {:>8} {:>9}",
        "estimator", "mean", "bias", "SE", "RMSE", "boot SE", "coverage"
    );
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{:<14} {:>9.3} {:>8.3} {:>7.3} {:>7.3} {:>8} {:>9}",
            r.estimator,
            r.mean,
            r.bias,
            r.se,
            r.rmse,
            fmt_cell(r.mean_boot_se, false),
            fmt_cell(r.coverage, true),
        );
    }
    if summary.assignment_redraws > 0 || summary.bootstrap_redraws > 0 {
        let _ = writeln!(
            out,
            "degenerate redraws: {} assignment, {} bootstrap",
            summary.assignment_redraws, summary.bootstrap_redraws
        );
    }
    out
}

fn summary_csv(label: &str, summary: &StudySummary) -> String {
    let mut out =
        String::from("scenario,estimator,tau,mean,bias,se,rmse,mean_boot_se,coverage\n");
    for r in &summary.rows {
        out.push_str(&format!(
            "{label},{},{},{},{},{},{},{},{}\n",
            r.estimator,
            summary.tau,
            r.mean,
            r.bias,
            r.se,
            r.rmse,
            r.mean_boot_se.map(|v| v.to_string()).unwrap_or_default(),
            r.coverage.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    out
}

fn render_sweep(gammas: &[f64], study: &StudyConfig, result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "correlation sweep: {} populations per gamma, reps = {}, n = {}",
        result.populations_per_gamma, result.replications, study.sample_size
    );
    let _ = writeln!(
        out,
        "{:<8} {:<14} {:>8} {:>7} {:>7}",
        "gamma", "estimator", "bias", "SE", "RMSE"
    );
    let mut estimators: Vec<String> = Vec::new();
    for r in &result.rows {
        if !estimators.contains(&r.estimator) {
            estimators.push(r.estimator.clone());
        }
    }
    for &g in gammas {
        for est in &estimators {
            let bias = result.average(g, est, |r| r.bias);
            let se = result.average(g, est, |r| r.se);
            let rmse = result.average(g, est, |r| r.rmse);
            let _ = writeln!(out, "{g:<8} {est:<14} {bias:>8.3} {se:>7.3} {rmse:>7.3}");
        }
    }
    out
}

fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("gamma,population,estimator,tau,mean,bias,se,rmse\n");
    for r in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.gamma, r.population, r.estimator, r.tau, r.mean, r.bias, r.se, r.rmse
        ));
    }
    out
}
