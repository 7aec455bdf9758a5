//! Shared data model: populations with full potential outcomes, observed
//! experiment data, sample draws, and estimate reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rescale positive weights so their mean is exactly 1.
///
/// Ordering and ratios are preserved; applying the function twice gives the
/// same result up to machine precision.
pub fn normalize_weights(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (i, &wi) in w.iter().enumerate() {
        if !wi.is_finite() || wi <= 0.0 {
            return Err(Error::NonPositiveWeight { index: i, value: wi });
        }
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    Ok(w.iter().map(|wi| wi / mean).collect())
}

/// A finite population with both potential outcomes and selection
/// probabilities known for every unit. This is the oracle world that the
/// simulation engine and the bias diagnostics operate on.
#[derive(Debug, Clone)]
pub struct Population {
    y0: Vec<f64>,
    y1: Vec<f64>,
    pi: Vec<f64>,
}

impl Population {
    pub fn new(y0: Vec<f64>, y1: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        let n = y0.len();
        if n < 2 {
            return Err(Error::TooFew { needed: 2, got: n });
        }
        if y1.len() != n {
            return Err(Error::LengthMismatch(n, y1.len()));
        }
        if pi.len() != n {
            return Err(Error::LengthMismatch(n, pi.len()));
        }
        for (i, &p) in pi.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "selection probability at unit {i} must lie in (0,1], got {p}"
                )));
            }
        }
        Ok(Self { y0, y1, pi })
    }

    pub fn size(&self) -> usize {
        self.y0.len()
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Mean selection probability over the population.
    pub fn pi_bar(&self) -> f64 {
        self.pi.iter().sum::<f64>() / self.size() as f64
    }

    /// Expected sample size under Poisson selection.
    pub fn expected_n(&self) -> f64 {
        self.pi.iter().sum()
    }

    /// Unit weights, mean(pi)/pi_i, relative to a baseline of 1.
    pub fn weights(&self) -> Vec<f64> {
        let pb = self.pi_bar();
        self.pi.iter().map(|&p| pb / p).collect()
    }

    /// Unit-level treatment effects.
    pub fn deltas(&self) -> Vec<f64> {
        self.y1
            .iter()
            .zip(&self.y0)
            .map(|(&a, &b)| a - b)
            .collect()
    }

    /// Population average treatment effect.
    pub fn tau(&self) -> f64 {
        let n = self.size() as f64;
        (self.y1.iter().sum::<f64>() - self.y0.iter().sum::<f64>()) / n
    }
}

/// The units selected into one realized sample, as indices into a
/// [`Population`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleDraw {
    indices: Vec<usize>,
}

impl SampleDraw {
    pub fn new(indices: Vec<usize>, population_size: usize) -> Result<Self> {
        let mut seen = vec![false; population_size];
        for &i in &indices {
            if i >= population_size {
                return Err(Error::InvalidConfig(format!(
                    "sample index {i} out of range for population of {population_size}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidConfig(format!("duplicate sample index {i}")));
            }
            seen[i] = true;
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Observed experiment data: outcome, treatment flag, and unit weight per
/// respondent, plus optional categorical covariate columns.
///
/// Weights are normalized to mean 1 on construction; all ratio estimators
/// downstream are invariant to the incoming scale.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    y: Vec<f64>,
    t: Vec<bool>,
    w: Vec<f64>,
    covariates: BTreeMap<String, Vec<String>>,
    n1: usize,
    z: f64,
    z1: f64,
}

impl ExperimentData {
    /// Validate raw columns and derive the arm masses. Rejects non-positive
    /// weights, non-finite outcomes, and experiments with an empty arm.
    pub fn new(y: Vec<f64>, t: Vec<bool>, w: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if t.len() != n {
            return Err(Error::LengthMismatch(n, t.len()));
        }
        if w.len() != n {
            return Err(Error::LengthMismatch(n, w.len()));
        }
        for (i, &yi) in y.iter().enumerate() {
            if !yi.is_finite() {
                return Err(Error::MissingValue {
                    column: "outcome".into(),
                    index: i,
                });
            }
        }
        let w = normalize_weights(&w)?;
        let n1 = t.iter().filter(|&&ti| ti).count();
        if n1 == 0 || n1 == n {
            return Err(Error::DegenerateArm { n1, n0: n - n1 });
        }
        let z = w.iter().sum::<f64>();
        let z1 = w.iter().zip(&t).filter(|(_, &ti)| ti).map(|(&wi, _)| wi).sum();
        Ok(Self {
            y,
            t,
            w,
            covariates: BTreeMap::new(),
            n1,
            z,
            z1,
        })
    }

    pub fn with_covariate(mut self, name: &str, values: Vec<String>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::LengthMismatch(self.len(), values.len()));
        }
        for (i, v) in values.iter().enumerate() {
            if v.is_empty() {
                return Err(Error::MissingValue {
                    column: name.into(),
                    index: i,
                });
            }
        }
        self.covariates.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn treatments(&self) -> &[bool] {
        &self.t
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn covariate(&self, name: &str) -> Result<&[String]> {
        self.covariates
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.keys().map(String::as_str)
    }

    pub fn n_treated(&self) -> usize {
        self.n1
    }

    pub fn n_control(&self) -> usize {
        self.len() - self.n1
    }

    /// Total weight mass of the sample.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Weight mass in the treated arm.
    pub fn z1(&self) -> f64 {
        self.z1
    }

    /// Weight mass in the control arm.
    pub fn z0(&self) -> f64 {
        self.z - self.z1
    }
}

/// Identity of a point estimator, as reported on the CLI surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    SateDm,
    HajekMean,
    HtMean,
    DoubleHajek,
    SingleHajek,
    TauSd,
    PsDouble,
    PsSingle,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::SateDm => "sate_dm",
            EstimatorId::HajekMean => "hajek_mean",
            EstimatorId::HtMean => "ht_mean",
            EstimatorId::DoubleHajek => "double_hajek",
            EstimatorId::SingleHajek => "single_hajek",
            EstimatorId::TauSd => "tau_sd",
            EstimatorId::PsDouble => "ps_double",
            EstimatorId::PsSingle => "ps_single",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "sate_dm" => EstimatorId::SateDm,
            "hajek_mean" => EstimatorId::HajekMean,
            "ht_mean" => EstimatorId::HtMean,
            "double_hajek" => EstimatorId::DoubleHajek,
            "single_hajek" => EstimatorId::SingleHajek,
            "tau_sd" => EstimatorId::TauSd,
            "ps_double" => EstimatorId::PsDouble,
            "ps_single" => EstimatorId::PsSingle,
            _ => return None,
        })
    }
}

impl std::fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the standard error of a report was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMethod {
    Plugin,
    Bootstrap,
    None,
}

/// One estimate with its uncertainty and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    pub point: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub se_method: SeMethod,
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
}

impl EstimateReport {
    /// ci_low <= point <= ci_high when present; se present whenever ci is.
    pub fn check_invariants(&self) -> Result<()> {
        if let (Some(lo), Some(hi)) = (self.ci_low, self.ci_high) {
            if self.se.is_none() {
                return Err(Error::InvalidConfig("ci without se".into()));
            }
            if !(lo <= self.point && self.point <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "ci [{lo}, {hi}] does not bracket point {}",
                    self.point
                )));
            }
        }
        if let Some(se) = self.se {
            if se < 0.0 {
                return Err(Error::InvalidConfig(format!("negative se {se}")));
            }
        }
        Ok(())
    }
}
