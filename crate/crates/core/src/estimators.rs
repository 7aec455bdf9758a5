//! Point estimators: sample means, the SATE difference-in-means, the
//! weighted PATE family, oracle estimators, and post-stratified variants.
//!
//! Everything here is a pure function of its inputs. The effect estimators
//! take the observed columns as slices so that resampling code can run them
//! on scratch buffers without re-validating.

use crate::error::{Error, Result};
use crate::model::{ExperimentData, Population, SampleDraw};
use crate::strata::StrataPartition;

/// (sum w, sum w*y) for each arm, plus arm counts.
struct ArmSums {
    z1: f64,
    z0: f64,
    swy1: f64,
    swy0: f64,
    n1: usize,
    n0: usize,
}

fn arm_sums(y: &[f64], t: &[bool], w: &[f64]) -> Result<ArmSums> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y.len() != t.len() {
        return Err(Error::LengthMismatch(y.len(), t.len()));
    }
    if y.len() != w.len() {
        return Err(Error::LengthMismatch(y.len(), w.len()));
    }
    let mut s = ArmSums {
        z1: 0.0,
        z0: 0.0,
        swy1: 0.0,
        swy0: 0.0,
        n1: 0,
        n0: 0,
    };
    for i in 0..y.len() {
        if t[i] {
            s.n1 += 1;
            s.z1 += w[i];
            s.swy1 += w[i] * y[i];
        } else {
            s.n0 += 1;
            s.z0 += w[i];
            s.swy0 += w[i] * y[i];
        }
    }
    Ok(s)
}

/// The usual weighted average of the units: (sum w*y) / (sum w).
pub fn hajek_mean(y: &[f64], w: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    if y.len() != w.len() {
        return Err(Error::LengthMismatch(y.len(), w.len()));
    }
    let (mut sw, mut swy) = (0.0, 0.0);
    for (&yi, &wi) in y.iter().zip(w) {
        sw += wi;
        swy += wi * yi;
    }
    Ok(swy / sw)
}

/// Inverse-probability-weighted mean normalized by the expected sample size
/// rather than the realized weight mass. Unbiased but not translation
/// invariant: adding a constant to y shifts the estimate by
/// c * Z / expected_n, not by c.
pub fn horvitz_thompson_mean(y: &[f64], w: &[f64], expected_n: f64) -> Result<f64> {
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
    let swy: f64 = y.iter().zip(w).map(|(&yi, &wi)| wi * yi).sum();
    Ok(swy / expected_n)
}

/// Neyman's difference-in-means. Ignores weights.
pub fn sate_diff_means(y: &[f64], t: &[bool]) -> Result<f64> {
    let ones = vec![1.0; y.len()];
    let s = arm_sums(y, t, &ones)?;
    if s.n1 == 0 || s.n0 == 0 {
        return Err(Error::DegenerateArm { n1: s.n1, n0: s.n0 });
    }
    Ok(s.swy1 / s.n1 as f64 - s.swy0 / s.n0 as f64)
}

/// Difference of per-arm weighted means, each normalized by the realized
/// weight mass of its own arm. Equals the weighted least-squares coefficient
/// on the treatment indicator.
pub fn double_hajek(y: &[f64], t: &[bool], w: &[f64]) -> Result<f64> {
    let s = arm_sums(y, t, w)?;
    if s.n1 == 0 || s.n0 == 0 {
        return Err(Error::DegenerateArm { n1: s.n1, n0: s.n0 });
    }
    Ok(s.swy1 / s.z1 - s.swy0 / s.z0)
}

/// Per-arm weighted sums normalized by the expected arm masses Z*p and
/// Z*(1-p). Unbiased over randomizations for the weighted sample effect.
///
/// `p` defaults to the conditioned n1/n; with an explicit `p` the estimator
/// stays defined even when one arm is empty (that sum is just zero).
pub fn single_hajek(y: &[f64], t: &[bool], w: &[f64], p: Option<f64>) -> Result<f64> {
    let s = arm_sums(y, t, w)?;
    let n = s.n1 + s.n0;
    let p = match p {
        Some(p) => {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidConfig(format!("p must lie in (0,1), got {p}")));
            }
            p
        }
        None => {
            if s.n1 == 0 || s.n0 == 0 {
                return Err(Error::DegenerateArm { n1: s.n1, n0: s.n0 });
            }
            s.n1 as f64 / n as f64
        }
    };
    let z = s.z1 + s.z0;
    Ok(s.swy1 / (z * p) - s.swy0 / (z * (1.0 - p)))
}

/// Per-arm weighted sums normalized by arm counts. Unbiased for fixed n at
/// the price of a variance that scales with the weight spread.
pub fn tau_sd(y: &[f64], t: &[bool], w: &[f64]) -> Result<f64> {
    let s = arm_sums(y, t, w)?;
    if s.n1 == 0 || s.n0 == 0 {
        return Err(Error::DegenerateArm { n1: s.n1, n0: s.n0 });
    }
    Ok(s.swy1 / s.n1 as f64 - s.swy0 / s.n0 as f64)
}

/// Mean unit-level effect over the drawn units (needs both potential
/// outcomes, so only the oracle world can compute it).
pub fn oracle_sate(pop: &Population, draw: &SampleDraw) -> Result<f64> {
    if draw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum: f64 = draw
        .indices()
        .iter()
        .map(|&i| pop.y1()[i] - pop.y0()[i])
        .sum();
    Ok(sum / draw.len() as f64)
}

/// Weighted mean unit-level effect over the drawn units, normalized by the
/// drawn weight mass.
pub fn oracle_nu(pop: &Population, draw: &SampleDraw) -> Result<f64> {
    if draw.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pb = pop.pi_bar();
    let (mut sw, mut swd) = (0.0, 0.0);
    for &i in draw.indices() {
        let wi = pb / pop.pi()[i];
        sw += wi;
        swd += wi * (pop.y1()[i] - pop.y0()[i]);
    }
    Ok(swd / sw)
}

/// Which per-stratum estimator the post-stratified combination uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsVariant {
    Double,
    Single,
}

/// Post-stratified effect estimate over an already-built partition: strata
/// missing an arm are merged into their nearest neighbor by weight order
/// before combining, and the number of merges is returned alongside.
pub fn post_stratified_detailed(
    data: &ExperimentData,
    part: &StrataPartition,
    variant: PsVariant,
    p: Option<f64>,
) -> Result<(f64, usize)> {
    post_stratified_slices(
        data.outcomes(),
        data.treatments(),
        data.weights(),
        part,
        variant,
        p,
    )
}

/// As [`post_stratified_detailed`], discarding the merge count.
pub fn post_stratified(
    data: &ExperimentData,
    part: &StrataPartition,
    variant: PsVariant,
    p: Option<f64>,
) -> Result<f64> {
    post_stratified_detailed(data, part, variant, p).map(|(est, _)| est)
}

pub(crate) fn post_stratified_slices(
    y: &[f64],
    t: &[bool],
    w: &[f64],
    part: &StrataPartition,
    variant: PsVariant,
    p: Option<f64>,
) -> Result<(f64, usize)> {
    if y.len() != part.labels().len() {
        return Err(Error::LengthMismatch(y.len(), part.labels().len()));
    }
    let (part, merges) = part.repaired()?;
    let k = part.k();
    let mut swy1 = vec![0.0; k];
    let mut swy0 = vec![0.0; k];
    for i in 0..y.len() {
        let s = part.labels()[i];
        if t[i] {
            swy1[s] += w[i] * y[i];
        } else {
            swy0[s] += w[i] * y[i];
        }
    }
    let z: f64 = part.z().iter().sum();
    let mut est = 0.0;
    for s in 0..k {
        match variant {
            PsVariant::Double => {
                let tau_k = swy1[s] / part.z1()[s] - swy0[s] / part.z0()[s];
                est += part.f_hat()[s] * tau_k;
            }
            PsVariant::Single => {
                // f_hat_k * tau_k^(h) collapses to (1/Z) * per-arm sums: the
                // stratum mass cancels against the combination share.
                let n_k = part.counts()[s] as f64;
                let p_k = p.unwrap_or(part.treated_counts()[s] as f64 / n_k);
                if !(p_k > 0.0 && p_k < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "stratum {s}: p must lie in (0,1), got {p_k}"
                    )));
                }
                est += (swy1[s] / p_k - swy0[s] / (1.0 - p_k)) / z;
            }
        }
    }
    Ok((est, merges))
}
