//! Finite-population Monte Carlo engine: the latent-correlation data
//! generating process, repeated sample-then-randomize studies, and the
//! correlation sweep behind the precision-gain analysis.
//!
//! Replicates run on independent RNG substreams keyed by (seed, replicate
//! index), so summaries are bit-identical for any degree of parallelism.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    assign_treatment, derive_seed, substream_rng, weighted_sample_without_replacement,
    AssignmentPlan,
};
use crate::error::{Error, Result};
use crate::estimators::{oracle_nu, oracle_sate};
use crate::model::{ExperimentData, Population};
use crate::uncertainty::{
    bootstrap_replicates, normal_quantile, BootstrapConfig, CiMethod, EstimatorSpec,
};

fn std_normal_cdf(x: f64) -> f64 {
    crate::uncertainty::normal_cdf(x)
}

/// Treatment-effect regime of the generated population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EffectKind {
    /// Effect 10 * sqrt(weight_max - shadow weight): largest for the
    /// rarest units.
    Heterogeneous,
    /// The same additive effect for every unit.
    Constant { value: f64 },
}

/// Configuration of the population generator.
///
/// Weights are uniform on (weight_min, weight_max); the shadow weight driving
/// the outcomes shares this distribution with latent correlation `gamma`.
/// Control outcomes are 120 - 20 sqrt(shadow) + noise_sd * N(0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    pub population_size: usize,
    pub gamma: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub noise_sd: f64,
    pub effect: EffectKind,
    /// Selection probabilities are proportional to 1/weight and scaled to
    /// sum to this target.
    pub target_sample_size: usize,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            population_size: 10_000,
            gamma: 1.0,
            weight_min: 1.2,
            weight_max: 1.2 + 23.88,
            noise_sd: 5.0,
            effect: EffectKind::Heterogeneous,
            target_sample_size: 500,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in [0,1], got {}",
                self.gamma
            )));
        }
        if !(self.weight_min > 0.0 && self.weight_max > self.weight_min) {
            return Err(Error::InvalidInterval {
                low: self.weight_min,
                high: self.weight_max,
            });
        }
        if self.population_size < 100 {
            return Err(Error::InvalidConfig(format!(
                "population size must be at least 100, got {}",
                self.population_size
            )));
        }
        if self.target_sample_size == 0 || self.target_sample_size > self.population_size {
            return Err(Error::InvalidConfig(format!(
                "target sample size {} out of range for population {}",
                self.target_sample_size, self.population_size
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise sd must be nonnegative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    /// Population effect implied by the heterogeneous regime:
    /// (20/3) sqrt(weight_max - weight_min). The constant regime returns the
    /// constant.
    pub fn expected_tau(&self) -> f64 {
        match self.effect {
            EffectKind::Heterogeneous => 20.0 / 3.0 * (self.weight_max - self.weight_min).sqrt(),
            EffectKind::Constant { value } => value,
        }
    }
}

/// Draw a population: latent bivariate-normal pair with correlation gamma,
/// weights and shadow weights by the CDF transform, outcomes from the shadow
/// weight, and selection probabilities proportional to 1/weight (capped at 1,
/// rescaled to hit the target expected sample size).
pub fn generate_population<R: Rng>(cfg: &DgpConfig, rng: &mut R) -> Result<Population> {
    cfg.validate()?;
    let n = cfg.population_size;
    let (a, b) = (cfg.weight_min, cfg.weight_max);
    let width = b - a;
    let mix = (1.0 - cfg.gamma * cfg.gamma).sqrt();
    let mut w = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for _ in 0..n {
        let eps: f64 = rng.sample(StandardNormal);
        let eta: f64 = rng.sample(StandardNormal);
        let noise: f64 = rng.sample(StandardNormal);
        let eps_shadow = cfg.gamma * eps + mix * eta;
        let wi = a + width * std_normal_cdf(eps);
        let shadow = a + width * std_normal_cdf(eps_shadow);
        let y0i = 120.0 - 20.0 * shadow.sqrt() + cfg.noise_sd * noise;
        let y1i = match cfg.effect {
            EffectKind::Heterogeneous => y0i + 10.0 * (b - shadow).sqrt(),
            EffectKind::Constant { value } => y0i + value,
        };
        w.push(wi);
        y0.push(y0i);
        y1.push(y1i);
    }
    let pi = scaled_inclusion_probabilities(&w, cfg.target_sample_size as f64);
    Population::new(y0, y1, pi)
}

/// pi_i = min(1, c/w_i) with c chosen so the probabilities sum to `target`.
fn scaled_inclusion_probabilities(w: &[f64], target: f64) -> Vec<f64> {
    let mut capped = vec![false; w.len()];
    loop {
        let free_mass: f64 = w
            .iter()
            .zip(&capped)
            .filter(|(_, &c)| !c)
            .map(|(&wi, _)| 1.0 / wi)
            .sum();
        let n_capped = capped.iter().filter(|&&c| c).count();
        let c = (target - n_capped as f64) / free_mass;
        let mut changed = false;
        for (i, &wi) in w.iter().enumerate() {
            if !capped[i] && c / wi >= 1.0 {
                capped[i] = true;
                changed = true;
            }
        }
        if !changed {
            return w
                .iter()
                .zip(&capped)
                .map(|(&wi, &cap)| if cap { 1.0 } else { c / wi })
                .collect();
        }
    }
}

/// One repeated-experiment study on a fixed population.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub sample_size: usize,
    pub assignment: AssignmentPlan,
    pub replications: usize,
    pub estimators: Vec<EstimatorSpec>,
    /// 0 disables the bootstrap (no SE means, no coverage).
    pub bootstrap_replicates: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl StudyConfig {
    /// The default estimator battery: difference-in-means, double-Hajek,
    /// and the post-stratified double-Hajek on k weight-quantile strata.
    pub fn default_estimators(k: usize) -> Vec<EstimatorSpec> {
        vec![
            EstimatorSpec::SateDm,
            EstimatorSpec::DoubleHajek,
            EstimatorSpec::ps_double(k),
        ]
    }

    pub fn validate(&self, pop: &Population) -> Result<()> {
        if self.sample_size < 2 || self.sample_size >= pop.size() {
            return Err(Error::InvalidConfig(format!(
                "sample size {} out of range for population {}",
                self.sample_size,
                pop.size()
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators requested".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci level must lie in (0,1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sample_size: 500,
            assignment: AssignmentPlan::Bernoulli { p: 0.5 },
            replications: 10_000,
            estimators: Self::default_estimators(7),
            bootstrap_replicates: 400,
            ci_level: 0.95,
            seed: 0,
        }
    }
}

/// Monte Carlo performance of one estimator (or oracle) across replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub estimator: String,
    pub mean: f64,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    pub mean_boot_se: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySummary {
    pub tau: f64,
    pub replications: usize,
    pub sample_size: usize,
    pub rows: Vec<PerformanceRow>,
    pub assignment_redraws: usize,
    pub bootstrap_redraws: usize,
}

impl StudySummary {
    pub fn row(&self, estimator: &str) -> Option<&PerformanceRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}

struct ReplicateRecord {
    tau_s: f64,
    nu_s: f64,
    points: Vec<f64>,
    boot_ses: Vec<f64>,
    assignment_redraws: usize,
    bootstrap_redraws: usize,
}

fn run_replicate(
    pop: &Population,
    study: &StudyConfig,
    replicate: usize,
) -> Result<ReplicateRecord> {
    let mut rng = substream_rng(study.seed, replicate as u64 + 1);
    let draw = weighted_sample_without_replacement(pop, study.sample_size, &mut rng)?;
    let pi_bar = pop.pi_bar();
    let w: Vec<f64> = draw
        .indices()
        .iter()
        .map(|&i| pi_bar / pop.pi()[i])
        .collect();
    let mut assignment_redraws = 0usize;
    let t = loop {
        match assign_treatment(draw.len(), &study.assignment, &mut rng) {
            Ok(t) => break t,
            Err(Error::DegenerateArm { .. }) => assignment_redraws += 1,
            Err(e) => return Err(e),
        }
    };
    let y: Vec<f64> = draw
        .indices()
        .iter()
        .zip(&t)
        .map(|(&i, &ti)| if ti { pop.y1()[i] } else { pop.y0()[i] })
        .collect();
    let data = ExperimentData::new(y, t, w)?;
    let tau_s = oracle_sate(pop, &draw)?;
    let nu_s = oracle_nu(pop, &draw)?;
    let points: Vec<f64> = study
        .estimators
        .iter()
        .map(|s| s.evaluate(&data))
        .collect::<Result<_>>()?;
    let (boot_ses, bootstrap_redraws) = if study.bootstrap_replicates >= 2 {
        let cfg = BootstrapConfig {
            replicates: study.bootstrap_replicates,
            seed: derive_seed(study.seed, replicate as u64 + 1),
            ci_level: study.ci_level,
            ci_method: CiMethod::Normal,
        };
        let draws = bootstrap_replicates(&data, &study.estimators, &cfg)?;
        let ses = draws
            .estimates
            .iter()
            .map(|reps| {
                let m = reps.len() as f64;
                let mean = reps.iter().sum::<f64>() / m;
                (reps.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
            })
            .collect();
        (ses, draws.redraws)
    } else {
        (Vec::new(), 0)
    };
    Ok(ReplicateRecord {
        tau_s,
        nu_s,
        points,
        boot_ses,
        assignment_redraws,
        bootstrap_redraws,
    })
}

/// Repeatedly sample from the population, randomize, estimate, and bootstrap;
/// aggregate into per-estimator performance rows (the oracles tau_s and nu_s
/// are always included). Deterministic for a fixed (config, seed).
pub fn run_study(pop: &Population, study: &StudyConfig) -> Result<StudySummary> {
    study.validate(pop)?;
    let records: Result<Vec<ReplicateRecord>> = (0..study.replications)
        .into_par_iter()
        .map(|r| run_replicate(pop, study, r))
        .collect();
    let records = records?;
    let tau = pop.tau();
    let z = normal_quantile((1.0 + study.ci_level) / 2.0);

    let summarize = |values: &[f64]| -> (f64, f64, f64, f64) {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let bias = mean - tau;
        (mean, bias, var.sqrt(), (bias * bias + var).sqrt())
    };

    let mut rows = Vec::new();
    for (label, values) in [
        ("tau_s", records.iter().map(|r| r.tau_s).collect::<Vec<_>>()),
        ("nu_s", records.iter().map(|r| r.nu_s).collect::<Vec<_>>()),
    ] {
        let (mean, bias, se, rmse) = summarize(&values);
        rows.push(PerformanceRow {
            estimator: label.to_string(),
            mean,
            bias,
            se,
            rmse,
            mean_boot_se: None,
            coverage: None,
        });
    }
    for (j, spec) in study.estimators.iter().enumerate() {
        let points: Vec<f64> = records.iter().map(|r| r.points[j]).collect();
        let (mean, bias, se, rmse) = summarize(&points);
        let (mean_boot_se, coverage) = if study.bootstrap_replicates >= 2 {
            let ses: Vec<f64> = records.iter().map(|r| r.boot_ses[j]).collect();
            let mb = ses.iter().sum::<f64>() / ses.len() as f64;
            let covered = points
                .iter()
                .zip(&ses)
                .filter(|(&p, &s)| (p - tau).abs() <= z * s)
                .count();
            (Some(mb), Some(covered as f64 / points.len() as f64))
        } else {
            (None, None)
        };
        rows.push(PerformanceRow {
            estimator: spec.id().to_string(),
            mean,
            bias,
            se,
            rmse,
            mean_boot_se,
            coverage,
        });
    }
    Ok(StudySummary {
        tau,
        replications: study.replications,
        sample_size: study.sample_size,
        rows,
        assignment_redraws: records.iter().map(|r| r.assignment_redraws).sum(),
        bootstrap_redraws: records.iter().map(|r| r.bootstrap_redraws).sum(),
    })
}

/// One (gamma, population, estimator) cell of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub population: usize,
    pub estimator: String,
    pub tau: f64,
    pub mean: f64,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub replications: usize,
    pub populations_per_gamma: usize,
}

impl SweepResult {
    /// Average a column over the populations of one gamma cell.
    pub fn average<F: Fn(&SweepRow) -> f64>(&self, gamma: f64, estimator: &str, f: F) -> f64 {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.gamma == gamma && r.estimator == estimator)
            .map(f)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Vary the latent weight-outcome correlation: for each gamma, generate
/// fresh populations and run the study on each, emitting per-(gamma,
/// population, estimator) bias/SE/RMSE rows. Populations and studies get
/// independent seed derivations, so the sweep is deterministic.
pub fn gamma_sweep(
    dgp: &DgpConfig,
    study: &StudyConfig,
    gammas: &[f64],
    populations_per_gamma: usize,
) -> Result<SweepResult> {
    if gammas.is_empty() || populations_per_gamma == 0 {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    let mut rows = Vec::new();
    for (gi, &gamma) in gammas.iter().enumerate() {
        let cfg = DgpConfig { gamma, ..*dgp };
        cfg.validate()?;
        for p in 0..populations_per_gamma {
            let cell = (gi * populations_per_gamma + p) as u64;
            let mut pop_rng = substream_rng(derive_seed(study.seed, 2 * cell + 1), 0);
            let pop = generate_population(&cfg, &mut pop_rng)?;
            let cell_study = StudyConfig {
                seed: derive_seed(study.seed, 2 * cell + 2),
                ..study.clone()
            };
            let summary = run_study(&pop, &cell_study)?;
            for row in &summary.rows {
                rows.push(SweepRow {
                    gamma,
                    population: p,
                    estimator: row.estimator.clone(),
                    tau: summary.tau,
                    mean: row.mean,
                    bias: row.bias,
                    se: row.se,
                    rmse: row.rmse,
                });
            }
        }
    }
    Ok(SweepResult {
        rows,
        replications: study.replications,
        populations_per_gamma,
    })
}
