//! SATE-vs-PATE comparison diagnostics: the standardized difference
//! statistic with its paired bootstrap, qq tables against the standard
//! normal, and the two analytic bias oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{double_hajek, sate_diff_means};
use crate::model::{ExperimentData, Population};
use crate::uncertainty::{bootstrap_replicates, normal_cdf, normal_quantile, BootstrapConfig, EstimatorSpec};

/// Standardized difference between the unweighted and weighted effect
/// estimates for one experiment. Positive delta means the difference-in-means
/// exceeds the double-Hajek.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaReport {
    pub sate: f64,
    pub hh: f64,
    pub se_diff: f64,
    pub delta: f64,
    pub n: usize,
    pub redraws: usize,
}

/// Compute both estimators, bootstrap their paired difference (the same
/// case-wise resamples feed both, so the SE reflects their dependence), and
/// standardize. Defined as 0 when both the difference and its SE vanish.
pub fn delta_statistic(data: &ExperimentData, cfg: &BootstrapConfig) -> Result<DeltaReport> {
    let (y, t, w) = (data.outcomes(), data.treatments(), data.weights());
    let sate = sate_diff_means(y, t)?;
    let hh = double_hajek(y, t, w)?;
    let draws = bootstrap_replicates(
        data,
        &[EstimatorSpec::SateDm, EstimatorSpec::DoubleHajek],
        cfg,
    )?;
    let diffs: Vec<f64> = draws.estimates[0]
        .iter()
        .zip(&draws.estimates[1])
        .map(|(a, b)| a - b)
        .collect();
    let m = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / m;
    let se_diff =
        (diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (m - 1.0)).sqrt();
    let point = sate - hh;
    let delta = if se_diff > 0.0 {
        point / se_diff
    } else {
        let scale = 1.0_f64.max(sate.abs()).max(hh.abs());
        if point.abs() <= 1e-12 * scale {
            0.0
        } else {
            return Err(Error::ZeroVariance);
        }
    };
    Ok(DeltaReport {
        sate,
        hh,
        se_diff,
        delta,
        n: data.len(),
        redraws: draws.redraws,
    })
}

/// Pair the ordered values with standard-normal quantiles at (i - 0.5)/m,
/// ready for external qq plotting.
pub fn qq_points(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let m = values.len();
    if m < 2 {
        return Err(Error::TooFew { needed: 2, got: m });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (normal_quantile((i as f64 + 0.5) / m as f64), v))
        .collect())
}

/// Kolmogorov-Smirnov distance of the values from the standard normal.
pub fn ks_distance_from_normal(values: &[f64]) -> Result<f64> {
    let m = values.len();
    if m < 2 {
        return Err(Error::TooFew { needed: 2, got: m });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let u = normal_cdf(x);
        d = d.max(((i + 1) as f64 / m as f64 - u).abs());
        d = d.max((u - i as f64 / m as f64).abs());
    }
    Ok(d)
}

/// First-order bias of the sample effect for the population effect,
/// evaluated with the nominal selection probabilities:
/// (1/N) sum (pi_i/pi_bar - 1) Delta_i.
pub fn sate_bias_oracle(pop: &Population) -> f64 {
    let pi_bar = pop.pi_bar();
    let n = pop.size() as f64;
    pop.pi()
        .iter()
        .zip(pop.deltas())
        .map(|(&p, d)| (p / pi_bar - 1.0) * d)
        .sum::<f64>()
        / n
}

/// First-order bias of the Hajek mean under Poisson selection:
/// -cov(y, w) / E[n], with the population covariance (1/N) sum (y_i - mu) w_i.
pub fn hajek_bias_oracle(y: &[f64], w: &[f64], expected_n: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y.len() != w.len() {
        return Err(Error::LengthMismatch(y.len(), w.len()));
    }
    if !expected_n.is_finite() || expected_n <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "expected sample size must be positive, got {expected_n}"
        )));
    }
    let n = y.len() as f64;
    let mu = y.iter().sum::<f64>() / n;
    let cov = y.iter().zip(w).map(|(&yi, &wi)| (yi - mu) * wi).sum::<f64>() / n;
    Ok(-cov / expected_n)
}

/// [`hajek_bias_oracle`] for one potential-outcome column of a population,
/// with weights pi_bar/pi_i and E[n] = sum pi_i.
pub fn hajek_bias_oracle_for(pop: &Population, treated: bool) -> Result<f64> {
    let y = if treated { pop.y1() } else { pop.y0() };
    hajek_bias_oracle(y, &pop.weights(), pop.expected_n())
}
