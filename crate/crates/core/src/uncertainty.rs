//! Variance estimation: randomization-based variances for the
//! difference-in-means, the plug-in variance for the double-Hajek, case-wise
//! bootstrap standard errors, and the sampling/randomization MSE
//! decomposition.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{
    assign_treatment, derive_seed, poisson_sample, substream_rng, weighted_sample_without_replacement,
    AssignmentPlan, SamplingPlan,
};
use crate::error::{Error, Result};
use crate::estimators::{
    double_hajek, post_stratified_slices, sate_diff_means, single_hajek, tau_sd, PsVariant,
};
use crate::model::{EstimatorId, ExperimentData, Population};
use crate::strata::StrataPartition;

/// Second moments of the potential outcomes for one sample, with the
/// inverse-arm-proportion expectations of the assignment plan. Oracle-only:
/// requires both potential outcomes per unit.
#[derive(Debug, Clone, Copy)]
pub struct SampleMoments {
    /// Sample variance of y(1), divisor n-1.
    pub var1: f64,
    /// Sample variance of y(0), divisor n-1.
    pub var0: f64,
    /// Sample variance of the unit effects, divisor n-1.
    pub var_delta: f64,
    /// Sample covariance of (y(1), y(0)), divisor n-1.
    pub gamma: f64,
    pub beta1: f64,
    pub beta0: f64,
}

fn sample_var_cov(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
        cab += (x - ma) * (y - mb);
    }
    (va / (n - 1.0), vb / (n - 1.0), cab / (n - 1.0))
}

impl SampleMoments {
    pub fn new(y1: &[f64], y0: &[f64], plan: &AssignmentPlan) -> Result<Self> {
        let n = y1.len();
        if n < 2 {
            return Err(Error::TooFew { needed: 2, got: n });
        }
        if y0.len() != n {
            return Err(Error::LengthMismatch(n, y0.len()));
        }
        let (var1, var0, gamma) = sample_var_cov(y1, y0);
        let delta: Vec<f64> = y1.iter().zip(y0).map(|(&a, &b)| a - b).collect();
        let (var_delta, _, _) = sample_var_cov(&delta, &delta);
        let p_eff = match plan {
            AssignmentPlan::Complete { .. } => plan.treated_count(n)? as f64 / n as f64,
            AssignmentPlan::Bernoulli { p } => *p,
        };
        Ok(Self {
            var1,
            var0,
            var_delta,
            gamma,
            beta1: 1.0 / p_eff,
            beta0: 1.0 / (1.0 - p_eff),
        })
    }
}

/// Randomization variance of the difference-in-means conditional on the
/// sample: (1/n) [beta1 var1 + beta0 var0 - var_delta]. For complete
/// randomization this is Neyman's result; for Bernoulli assignment the
/// betas use the conditioning approximation 1/p.
pub fn neyman_sate_variance(y1: &[f64], y0: &[f64], plan: &AssignmentPlan) -> Result<f64> {
    let m = SampleMoments::new(y1, y0, plan)?;
    let n = y1.len() as f64;
    Ok((m.beta1 * m.var1 + m.beta0 * m.var0 - m.var_delta) / n)
}

/// The feasible, conservative variance estimate s1^2/n1 + s0^2/n0. Upward
/// biased for the randomization variance whenever effects vary.
pub fn neyman_sate_var_estimate(data: &ExperimentData) -> Result<f64> {
    let (n1, n0) = (data.n_treated(), data.n_control());
    if n1 < 2 || n0 < 2 {
        return Err(Error::ArmTooSmall { n1, n0 });
    }
    let arm = |flag: bool| {
        let vals: Vec<f64> = data
            .outcomes()
            .iter()
            .zip(data.treatments())
            .filter(|(_, &t)| t == flag)
            .map(|(&y, _)| y)
            .collect();
        let (v, _, _) = sample_var_cov(&vals, &vals);
        v / vals.len() as f64
    };
    Ok(arm(true) + arm(false))
}

/// Plug-in variance estimate for the double-Hajek:
/// sum over each arm of (1/Z_l^2) sum w_i^2 (y_i - arm Hajek mean)^2.
/// This is the small-pi upper-bound form; it needs no selection
/// probabilities.
pub fn hh_plugin_variance(data: &ExperimentData) -> Result<f64> {
    hh_plugin_variance_impl(data, None, 0.5)
}

/// Exact-form variant keeping the (1 - p*pi_i) finite-population factors.
/// Oracle-only: needs the per-unit selection probabilities and the
/// treatment probability.
pub fn hh_plugin_variance_exact(data: &ExperimentData, pi: &[f64], p: f64) -> Result<f64> {
    if pi.len() != data.len() {
        return Err(Error::LengthMismatch(data.len(), pi.len()));
    }
    hh_plugin_variance_impl(data, Some(pi), p)
}

fn hh_plugin_variance_impl(data: &ExperimentData, pi: Option<&[f64]>, p: f64) -> Result<f64> {
    let (y, t, w) = (data.outcomes(), data.treatments(), data.weights());
    let (z1, z0) = (data.z1(), data.z0());
    if data.n_treated() == 0 || data.n_control() == 0 {
        return Err(Error::DegenerateArm {
            n1: data.n_treated(),
            n0: data.n_control(),
        });
    }
    let mu1 = y
        .iter()
        .zip(t)
        .zip(w)
        .filter(|((_, &ti), _)| ti)
        .map(|((&yi, _), &wi)| wi * yi)
        .sum::<f64>()
        / z1;
    let mu0 = y
        .iter()
        .zip(t)
        .zip(w)
        .filter(|((_, &ti), _)| !ti)
        .map(|((&yi, _), &wi)| wi * yi)
        .sum::<f64>()
        / z0;
    let mut v = 0.0;
    for i in 0..data.len() {
        let (mu, z, arm_p) = if t[i] { (mu1, z1, p) } else { (mu0, z0, 1.0 - p) };
        let fpc = pi.map_or(1.0, |pi| 1.0 - arm_p * pi[i]);
        v += fpc * (w[i] * (y[i] - mu)).powi(2) / (z * z);
    }
    Ok(v)
}

/// Confidence interval construction for bootstrap estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// point +/- z * SE
    Normal,
    /// empirical quantiles of the replicate estimates
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub ci_method: CiMethod,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 1000,
            seed: 0,
            ci_level: 0.95,
            ci_method: CiMethod::Normal,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
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

/// How strata are built for a post-stratified estimator. Weight-quantile
/// strata are re-derived from the resampled weights inside every bootstrap
/// replicate; covariate labels travel with their cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrataRecipe {
    WeightQuantiles { k: usize },
    Covariate { column: String },
    CovariateXWeights { column: String, k: usize },
}

/// A point estimator together with everything needed to recompute it on a
/// resampled dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorSpec {
    SateDm,
    /// Weighted mean of the outcome over all units (not an effect).
    HajekMean,
    /// Weighted outcome sum over the realized unit count (expected sample
    /// size is unknowable from observed data, so n stands in for it).
    HtMean,
    DoubleHajek,
    SingleHajek { p: Option<f64> },
    TauSd,
    PostStratified {
        variant: PsVariant,
        recipe: StrataRecipe,
        p: Option<f64>,
    },
}

impl EstimatorSpec {
    pub fn ps_double(k: usize) -> Self {
        EstimatorSpec::PostStratified {
            variant: PsVariant::Double,
            recipe: StrataRecipe::WeightQuantiles { k },
            p: None,
        }
    }

    pub fn id(&self) -> EstimatorId {
        match self {
            EstimatorSpec::SateDm => EstimatorId::SateDm,
            EstimatorSpec::HajekMean => EstimatorId::HajekMean,
            EstimatorSpec::HtMean => EstimatorId::HtMean,
            EstimatorSpec::DoubleHajek => EstimatorId::DoubleHajek,
            EstimatorSpec::SingleHajek { .. } => EstimatorId::SingleHajek,
            EstimatorSpec::TauSd => EstimatorId::TauSd,
            EstimatorSpec::PostStratified { variant, .. } => match variant {
                PsVariant::Double => EstimatorId::PsDouble,
                PsVariant::Single => EstimatorId::PsSingle,
            },
        }
    }

    fn partition(&self, data: &ExperimentData) -> Result<Option<StrataPartition>> {
        let EstimatorSpec::PostStratified { recipe, .. } = self else {
            return Ok(None);
        };
        let part = match recipe {
            StrataRecipe::WeightQuantiles { k } => StrataPartition::weight_quantiles(data, *k)?,
            StrataRecipe::Covariate { column } => StrataPartition::covariate(data, column)?,
            StrataRecipe::CovariateXWeights { column, k } => {
                StrataPartition::covariate_x_weights(data, column, *k)?
            }
        };
        Ok(Some(part))
    }

    /// Point estimate on validated data.
    pub fn evaluate(&self, data: &ExperimentData) -> Result<f64> {
        let (y, t, w) = (data.outcomes(), data.treatments(), data.weights());
        match self {
            EstimatorSpec::SateDm => sate_diff_means(y, t),
            EstimatorSpec::HajekMean => crate::estimators::hajek_mean(y, w),
            EstimatorSpec::HtMean => {
                crate::estimators::horvitz_thompson_mean(y, w, data.len() as f64)
            }
            EstimatorSpec::DoubleHajek => double_hajek(y, t, w),
            EstimatorSpec::SingleHajek { p } => single_hajek(y, t, w, *p),
            EstimatorSpec::TauSd => tau_sd(y, t, w),
            EstimatorSpec::PostStratified { variant, p, .. } => {
                let part = self.partition(data)?.expect("ps spec builds a partition");
                post_stratified_slices(y, t, w, &part, *variant, *p).map(|(est, _)| est)
            }
        }
    }

    /// The covariate column this estimator needs, if any.
    fn covariate_column(&self) -> Option<&str> {
        match self {
            EstimatorSpec::PostStratified { recipe, .. } => match recipe {
                StrataRecipe::Covariate { column }
                | StrataRecipe::CovariateXWeights { column, .. } => Some(column),
                StrataRecipe::WeightQuantiles { .. } => None,
            },
            _ => None,
        }
    }
}

fn recoverable(err: &Error) -> bool {
    matches!(
        err,
        Error::DegenerateArm { .. } | Error::EmptyStratumArm | Error::ArmTooSmall { .. }
    )
}

/// Replicate estimates from one set of shared case-wise resamples.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    /// estimates[spec_index][replicate]
    pub estimates: Vec<Vec<f64>>,
    /// Degenerate resamples that were redrawn across all replicates.
    pub redraws: usize,
}

/// Case-wise bootstrap: draw `replicates` with-replacement resamples of the
/// observed (outcome, treatment, weight) triples and recompute every
/// estimator in `specs` on each resample, re-running the full pipeline
/// including weight renormalization and strata re-derivation.
///
/// A resample on which any estimator is undefined (degenerate arm, strata
/// repair exhausted) is redrawn from the replicate's own stream, keeping the
/// replicate count fixed. Errors out if more than half of all attempted
/// resamples were degenerate.
pub fn bootstrap_replicates(
    data: &ExperimentData,
    specs: &[EstimatorSpec],
    cfg: &BootstrapConfig,
) -> Result<BootstrapDraws> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: data.len(),
        });
    }
    let n = data.len();
    let columns: Vec<&str> = specs.iter().filter_map(|s| s.covariate_column()).collect();
    // fail fast on a missing column instead of inside every replicate
    for c in &columns {
        data.covariate(c)?;
    }

    let one = |b: usize| -> Result<(Vec<f64>, usize)> {
        let mut rng = substream_rng(cfg.seed, b as u64 + 1);
        let mut redraws = 0usize;
        loop {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            match replicate_estimates(data, specs, &columns, &idx) {
                Ok(est) => return Ok((est, redraws)),
                Err(e) if recoverable(&e) => {
                    redraws += 1;
                    if redraws > cfg.replicates.max(1000) {
                        return Err(Error::DegenerateBootstrap {
                            redraws,
                            replicates: cfg.replicates,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    };

    let results: Result<Vec<(Vec<f64>, usize)>> = if cfg.replicates >= 64 {
        use rayon::prelude::*;
        (0..cfg.replicates).into_par_iter().map(one).collect()
    } else {
        (0..cfg.replicates).map(one).collect()
    };
    let results = results?;

    let redraws: usize = results.iter().map(|(_, r)| r).sum();
    if redraws > cfg.replicates {
        return Err(Error::DegenerateBootstrap {
            redraws,
            replicates: cfg.replicates,
        });
    }
    let mut estimates = vec![Vec::with_capacity(cfg.replicates); specs.len()];
    for (est, _) in results {
        for (s, v) in est.into_iter().enumerate() {
            estimates[s].push(v);
        }
    }
    Ok(BootstrapDraws { estimates, redraws })
}

fn replicate_estimates(
    data: &ExperimentData,
    specs: &[EstimatorSpec],
    columns: &[&str],
    idx: &[usize],
) -> Result<Vec<f64>> {
    let y: Vec<f64> = idx.iter().map(|&i| data.outcomes()[i]).collect();
    let t: Vec<bool> = idx.iter().map(|&i| data.treatments()[i]).collect();
    let w: Vec<f64> = idx.iter().map(|&i| data.weights()[i]).collect();
    let mut boot = ExperimentData::new(y, t, w)?;
    for c in columns {
        let source = data.covariate(c)?;
        let gathered: Vec<String> = idx.iter().map(|&i| source[i].clone()).collect();
        boot = boot.with_covariate(c, gathered)?;
    }
    specs.iter().map(|s| s.evaluate(&boot)).collect()
}

fn sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOutcome {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub redraws: usize,
    pub replicates: usize,
}

/// Bootstrap standard error and confidence interval for one estimator.
pub fn bootstrap_se(
    data: &ExperimentData,
    spec: &EstimatorSpec,
    cfg: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    let point = spec.evaluate(data)?;
    let draws = bootstrap_replicates(data, std::slice::from_ref(spec), cfg)?;
    let reps = &draws.estimates[0];
    let se = sd(reps);
    let (ci_low, ci_high) = match cfg.ci_method {
        CiMethod::Normal => {
            let z = normal_quantile((1.0 + cfg.ci_level) / 2.0);
            (point - z * se, point + z * se)
        }
        CiMethod::Percentile => {
            let mut sorted = reps.clone();
            sorted.sort_by(f64::total_cmp);
            let alpha = 1.0 - cfg.ci_level;
            (
                percentile(&sorted, alpha / 2.0),
                percentile(&sorted, 1.0 - alpha / 2.0),
            )
        }
    };
    Ok(BootstrapOutcome {
        point,
        se,
        ci_low,
        ci_high,
        redraws: draws.redraws,
        replicates: cfg.replicates,
    })
}

/// Standard-normal quantile (used for normal-approximation intervals).
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Monte-Carlo decomposition of an estimator's PATE mean squared error into
/// the randomization stage, the sampling stage, and their cross term.
#[derive(Debug, Clone, Copy)]
pub struct MseDecomposition {
    /// E over samples of MSE(estimator | sample) for the weighted sample
    /// effect.
    pub within_mse: f64,
    /// MSE of the weighted sample effect for the population effect.
    pub nu_mse: f64,
    /// 2 E[ b_S (nu_S - tau) ].
    pub cross_term: f64,
    /// Directly estimated overall MSE against the population effect.
    pub total_mse: f64,
}

impl MseDecomposition {
    pub fn sum_of_terms(&self) -> f64 {
        self.within_mse + self.nu_mse + self.cross_term
    }
}

pub fn mse_decomposition(
    pop: &Population,
    sampling: &SamplingPlan,
    assignment: &AssignmentPlan,
    spec: &EstimatorSpec,
    samples: usize,
    assignments_per_sample: usize,
    seed: u64,
) -> Result<MseDecomposition> {
    if samples == 0 || assignments_per_sample == 0 {
        return Err(Error::InvalidConfig(
            "mse decomposition needs at least one sample and one assignment".into(),
        ));
    }
    let tau = pop.tau();
    let pi_bar = pop.pi_bar();
    let (mut within, mut nu_sq, mut cross, mut total) = (0.0, 0.0, 0.0, 0.0);
    for r in 0..samples {
        let mut rng = substream_rng(seed, r as u64 + 1);
        let draw = loop {
            let d = match sampling {
                SamplingPlan::Poisson => poisson_sample(pop, &mut rng),
                SamplingPlan::FixedSizeWeighted { n } => {
                    weighted_sample_without_replacement(pop, *n, &mut rng)?
                }
            };
            if d.len() >= 2 {
                break d;
            }
        };
        let nu = crate::estimators::oracle_nu(pop, &draw)?;
        let w: Vec<f64> = draw.indices().iter().map(|&i| pi_bar / pop.pi()[i]).collect();
        let mut est_sum = 0.0;
        let mut err_sq = 0.0;
        let mut tot_sq = 0.0;
        for a in 0..assignments_per_sample {
            let mut arng = substream_rng(derive_seed(seed, r as u64 + 1), a as u64 + 1);
            let t = loop {
                match assign_treatment(draw.len(), assignment, &mut arng) {
                    Ok(t) => break t,
                    Err(Error::DegenerateArm { .. }) => continue,
                    Err(e) => return Err(e),
                }
            };
            let y: Vec<f64> = draw
                .indices()
                .iter()
                .zip(&t)
                .map(|(&i, &ti)| if ti { pop.y1()[i] } else { pop.y0()[i] })
                .collect();
            let data = ExperimentData::new(y, t, w.clone())?;
            let est = spec.evaluate(&data)?;
            est_sum += est;
            err_sq += (est - nu) * (est - nu);
            tot_sq += (est - tau) * (est - tau);
        }
        let m = assignments_per_sample as f64;
        let b_s = est_sum / m - nu;
        within += err_sq / m;
        nu_sq += (nu - tau) * (nu - tau);
        cross += 2.0 * b_s * (nu - tau);
        total += tot_sq / m;
    }
    let r = samples as f64;
    Ok(MseDecomposition {
        within_mse: within / r,
        nu_mse: nu_sq / r,
        cross_term: cross / r,
        total_mse: total / r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(y: &[f64], t: &[bool], w: &[f64]) -> ExperimentData {
        ExperimentData::new(y.to_vec(), t.to_vec(), w.to_vec()).unwrap()
    }

    /// Every complete randomization of n units with n1 treated.
    fn enumerate_assignments(n: usize, n1: usize) -> Vec<Vec<bool>> {
        let mut out = Vec::new();
        let mut current = vec![false; n];
        fn rec(start: usize, left: usize, current: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
            if left == 0 {
                out.push(current.clone());
                return;
            }
            for i in start..current.len() {
                if current.len() - i < left {
                    break;
                }
                current[i] = true;
                rec(i + 1, left - 1, current, out);
                current[i] = false;
            }
        }
        rec(0, n1, &mut current, &mut out);
        out
    }

    #[test]
    fn neyman_variance_zero_for_constant_outcomes() {
        let plan = AssignmentPlan::complete(0.5).unwrap();
        let v = neyman_sate_variance(&[3.0; 6], &[1.0; 6], &plan).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn neyman_variance_matches_enumeration() {
        // y1 = 1..4, y0 = 0: the exact variance of the difference-in-means
        // over all C(4,2) assignments is 5/12.
        let y1 = [1.0, 2.0, 3.0, 4.0];
        let y0 = [0.0; 4];
        let plan = AssignmentPlan::complete(0.5).unwrap();
        let v = neyman_sate_variance(&y1, &y0, &plan).unwrap();

        let assignments = enumerate_assignments(4, 2);
        let ests: Vec<f64> = assignments
            .iter()
            .map(|t| {
                let y: Vec<f64> = (0..4).map(|i| if t[i] { y1[i] } else { y0[i] }).collect();
                sate_diff_means(&y, t).unwrap()
            })
            .collect();
        let mean = ests.iter().sum::<f64>() / ests.len() as f64;
        let exact = ests.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / ests.len() as f64;
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        assert!((v - 5.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn neyman_variance_constant_shift_case() {
        // constant shift: var_delta = 0, var1 = var0, and the formula again
        // matches enumeration exactly
        let y0 = [1.0, 5.0, 2.0, 8.0];
        let y1: Vec<f64> = y0.iter().map(|v| v + 3.0).collect();
        let plan = AssignmentPlan::complete(0.5).unwrap();
        let v = neyman_sate_variance(&y1, &y0, &plan).unwrap();

        let assignments = enumerate_assignments(4, 2);
        let ests: Vec<f64> = assignments
            .iter()
            .map(|t| {
                let y: Vec<f64> = (0..4).map(|i| if t[i] { y1[i] } else { y0[i] }).collect();
                sate_diff_means(&y, t).unwrap()
            })
            .collect();
        let mean = ests.iter().sum::<f64>() / ests.len() as f64;
        let exact = ests.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / ests.len() as f64;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn moments_identity_links_variance_forms() {
        let y1 = [4.0, 9.0, 1.0, 7.5, 3.0];
        let y0 = [1.0, 3.0, 2.0, 6.0, 0.5];
        let plan = AssignmentPlan::complete(0.4).unwrap();
        let m = SampleMoments::new(&y1, &y0, &plan).unwrap();
        assert!((m.var_delta - (m.var1 + m.var0 - 2.0 * m.gamma)).abs() < 1e-10);
    }

    #[test]
    fn var_estimate_hand_value() {
        // treated {1,3}: s^2 = 2; control {2,2}: s^2 = 0 -> 2/2 + 0 = 1
        let d = data(
            &[1.0, 3.0, 2.0, 2.0],
            &[true, true, false, false],
            &[1.0; 4],
        );
        assert!((neyman_sate_var_estimate(&d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn var_estimate_zero_for_constant_arms() {
        let d = data(
            &[7.0, 7.0, 2.0, 2.0],
            &[true, true, false, false],
            &[1.0; 4],
        );
        assert_eq!(neyman_sate_var_estimate(&d).unwrap(), 0.0);
    }

    #[test]
    fn var_estimate_unbiased_when_effects_constant() {
        // sigma^2(delta) = 0: the expectation of s1^2/n1 + s0^2/n0 over all
        // assignments equals the exact randomization variance.
        let y0 = [1.0, 5.0, 2.0, 8.0, 4.0, 3.0];
        let y1: Vec<f64> = y0.iter().map(|v| v + 2.0).collect();
        let plan = AssignmentPlan::complete(0.5).unwrap();
        let v = neyman_sate_variance(&y1, &y0, &plan).unwrap();
        let assignments = enumerate_assignments(6, 3);
        let mean_est: f64 = assignments
            .iter()
            .map(|t| {
                let y: Vec<f64> = (0..6).map(|i| if t[i] { y1[i] } else { y0[i] }).collect();
                neyman_sate_var_estimate(&data(&y, t, &[1.0; 6])).unwrap()
            })
            .sum::<f64>()
            / assignments.len() as f64;
        assert!((mean_est - v).abs() < 1e-10, "{mean_est} vs {v}");
    }

    #[test]
    fn plugin_variance_equal_weight_reduction() {
        let y = [1.0, 3.0, 5.0, 2.0, 2.0, 8.0];
        let t = [true, true, true, false, false, false];
        let d = data(&y, &t, &[2.0; 6]);
        let v = hh_plugin_variance(&d).unwrap();
        // with all w equal the formula reduces to within-arm sums of squared
        // deviations over n_l^2
        let dev1: f64 = [1.0, 3.0, 5.0].iter().map(|x| (x - 3.0f64).powi(2)).sum();
        let dev0: f64 = [2.0, 2.0, 8.0].iter().map(|x| (x - 4.0f64).powi(2)).sum();
        let expect = dev1 / 9.0 + dev0 / 9.0;
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn plugin_variance_zero_for_constant_arms() {
        let d = data(
            &[5.0, 5.0, 1.0, 1.0],
            &[true, true, false, false],
            &[1.0, 3.0, 2.0, 1.0],
        );
        assert!(hh_plugin_variance(&d).unwrap().abs() < 1e-24);
    }

    #[test]
    fn plugin_exact_form_is_below_upper_bound() {
        let d = data(
            &[1.0, 4.0, 2.0, 9.0],
            &[true, false, true, false],
            &[1.0, 2.0, 3.0, 1.0],
        );
        let upper = hh_plugin_variance(&d).unwrap();
        let exact = hh_plugin_variance_exact(&d, &[0.2, 0.1, 0.05, 0.3], 0.5).unwrap();
        assert!(exact < upper);
        assert!(exact > 0.0);
    }

    #[test]
    fn bootstrap_constant_outcome_has_zero_se() {
        let d = data(
            &[4.0, 4.0, 4.0, 4.0],
            &[true, false, true, false],
            &[1.0, 2.0, 1.0, 2.0],
        );
        let cfg = BootstrapConfig {
            replicates: 200,
            seed: 42,
            ..Default::default()
        };
        let out = bootstrap_se(&d, &EstimatorSpec::SateDm, &cfg).unwrap();
        assert_eq!(out.se, 0.0);
        assert_eq!(out.ci_low, out.ci_high);
    }

    #[test]
    fn bootstrap_is_deterministic_for_fixed_seed() {
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        let t: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let w: Vec<f64> = (0..40).map(|i| 0.5 + (i % 5) as f64).collect();
        let d = ExperimentData::new(y, t, w).unwrap();
        let cfg = BootstrapConfig {
            replicates: 150,
            seed: 7,
            ..Default::default()
        };
        let a = bootstrap_se(&d, &EstimatorSpec::DoubleHajek, &cfg).unwrap();
        let b = bootstrap_se(&d, &EstimatorSpec::DoubleHajek, &cfg).unwrap();
        assert_eq!(a.se.to_bits(), b.se.to_bits());
        assert_eq!(a.ci_low.to_bits(), b.ci_low.to_bits());
    }

    #[test]
    fn bootstrap_se_invariant_to_weight_rescaling() {
        let y: Vec<f64> = (0..30).map(|i| (i as f64).cos() * 2.0).collect();
        let t: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let w: Vec<f64> = (0..30).map(|i| 1.0 + (i % 4) as f64 * 0.5).collect();
        let scaled: Vec<f64> = w.iter().map(|x| x * 37.5).collect();
        let cfg = BootstrapConfig {
            replicates: 100,
            seed: 3,
            ..Default::default()
        };
        let a = bootstrap_se(
            &ExperimentData::new(y.clone(), t.clone(), w).unwrap(),
            &EstimatorSpec::DoubleHajek,
            &cfg,
        )
        .unwrap();
        let b = bootstrap_se(
            &ExperimentData::new(y, t, scaled).unwrap(),
            &EstimatorSpec::DoubleHajek,
            &cfg,
        )
        .unwrap();
        assert!((a.se - b.se).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_percentile_ci_brackets_point_for_symmetric_data() {
        let y: Vec<f64> = (0..60).map(|i| (i % 7) as f64).collect();
        let t: Vec<bool> = (0..60).map(|i| i % 2 == 0).collect();
        let d = ExperimentData::new(y, t, vec![1.0; 60]).unwrap();
        let cfg = BootstrapConfig {
            replicates: 400,
            seed: 5,
            ci_method: CiMethod::Percentile,
            ..Default::default()
        };
        let out = bootstrap_se(&d, &EstimatorSpec::SateDm, &cfg).unwrap();
        assert!(out.ci_low <= out.point && out.point <= out.ci_high);
    }

    #[test]
    fn shared_replicates_align_across_estimators() {
        // equal weights: sate and double-hajek agree on every resample
        let y: Vec<f64> = (0..24).map(|i| (i as f64 * 1.3).sin()).collect();
        let t: Vec<bool> = (0..24).map(|i| i % 2 == 0).collect();
        let d = ExperimentData::new(y, t, vec![1.0; 24]).unwrap();
        let cfg = BootstrapConfig {
            replicates: 64,
            seed: 11,
            ..Default::default()
        };
        let draws = bootstrap_replicates(
            &d,
            &[EstimatorSpec::SateDm, EstimatorSpec::DoubleHajek],
            &cfg,
        )
        .unwrap();
        for (a, b) in draws.estimates[0].iter().zip(&draws.estimates[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
