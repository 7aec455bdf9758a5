//! Sampling and treatment-assignment mechanisms, plus the seeded RNG
//! substream scheme used by the simulation engine and the bootstrap.
//!
//! All operations are pure given an explicit RNG stream. Assignment is a
//! function of the sample size and the plan only; it never sees weights or
//! outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Population, SampleDraw};

/// Deterministic RNG for one unit of work: `master` selects the experiment,
/// `stream` selects an independent substream within it. Replicates get
/// distinct streams so results do not depend on execution order or the
/// degree of parallelism.
pub fn substream_rng(master: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed for a nested level of randomness (e.g. the bootstrap
/// inside one simulation replicate). SplitMix64 finalizer.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// How units within a realized sample are assigned to treatment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mechanism")]
pub enum AssignmentPlan {
    /// Independent coin flips with probability `p`.
    Bernoulli { p: f64 },
    /// Exactly `n1` treated units (defaults to round(n * p)), chosen
    /// uniformly at random.
    Complete {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n1: Option<usize>,
    },
}

impl AssignmentPlan {
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::check_p(p)?;
        Ok(AssignmentPlan::Bernoulli { p })
    }

    pub fn complete(p: f64) -> Result<Self> {
        Self::check_p(p)?;
        Ok(AssignmentPlan::Complete { p, n1: None })
    }

    pub fn complete_with_margin(p: f64, n1: usize) -> Result<Self> {
        Self::check_p(p)?;
        Ok(AssignmentPlan::Complete { p, n1: Some(n1) })
    }

    fn check_p(p: f64) -> Result<()> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "treatment probability must lie in (0,1), got {p}"
            )));
        }
        Ok(())
    }

    pub fn p(&self) -> f64 {
        match *self {
            AssignmentPlan::Bernoulli { p } | AssignmentPlan::Complete { p, .. } => p,
        }
    }

    /// Treated-arm size for complete randomization of `n` units.
    pub fn treated_count(&self, n: usize) -> Result<usize> {
        match *self {
            AssignmentPlan::Bernoulli { .. } => Err(Error::InvalidConfig(
                "bernoulli assignment has no fixed margin".into(),
            )),
            AssignmentPlan::Complete { p, n1 } => {
                let k = n1.unwrap_or_else(|| (n as f64 * p).round() as usize);
                if k == 0 || k >= n {
                    return Err(Error::InvalidConfig(format!(
                        "complete randomization needs 1 <= n1 <= n-1, got n1={k}, n={n}"
                    )));
                }
                Ok(k)
            }
        }
    }
}

/// How the sample is selected from the population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum SamplingPlan {
    /// Each unit enters independently with its own probability pi_i;
    /// the realized sample size is random.
    Poisson,
    /// Exactly `n` units drawn without replacement with selection
    /// probability proportional to 1/w_i at every step.
    FixedSizeWeighted { n: usize },
}

/// Poisson selection: unit i is included independently with probability
/// pi_i. The draw may be empty; callers decide how to handle that.
pub fn poisson_sample<R: Rng>(pop: &Population, rng: &mut R) -> SampleDraw {
    let indices = pop
        .pi()
        .iter()
        .enumerate()
        .filter(|(_, &p)| rng.gen::<f64>() < p)
        .map(|(i, _)| i)
        .collect();
    SampleDraw::new(indices, pop.size()).expect("indices are distinct and in range")
}

/// Draw exactly `n` distinct units by successive draws with per-step
/// probability proportional to 1/w_i among the units still available.
///
/// Implemented as an exponential race: unit i gets key E_i * w_i with
/// E_i ~ Exp(1), and the n smallest keys win. Ranking these keys draw by
/// draw reproduces the successive-draws scheme exactly.
pub fn weighted_sample_without_replacement<R: Rng>(
    pop: &Population,
    n: usize,
    rng: &mut R,
) -> Result<SampleDraw> {
    let size = pop.size();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if n > size {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: size,
        });
    }
    // pi_i is proportional to 1/w_i, so it serves directly as the size measure.
    let mut keyed: Vec<(f64, usize)> = pop
        .pi()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let e: f64 = Exp1.sample(rng);
            (e / p, i)
        })
        .collect();
    if n < size {
        keyed.select_nth_unstable_by(n - 1, |a, b| a.0.total_cmp(&b.0));
    }
    let mut indices: Vec<usize> = keyed[..n].iter().map(|&(_, i)| i).collect();
    indices.sort_unstable();
    SampleDraw::new(indices, size)
}

/// Randomize `n` units into treatment according to `plan`.
///
/// Bernoulli draws that leave an arm empty return `DegenerateArm`; callers
/// redraw (the simulation engine does, and counts the event).
pub fn assign_treatment<R: Rng>(
    n: usize,
    plan: &AssignmentPlan,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if n < 2 {
        return Err(Error::TooFew { needed: 2, got: n });
    }
    match *plan {
        AssignmentPlan::Bernoulli { p } => {
            let t: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() < p).collect();
            let n1 = t.iter().filter(|&&x| x).count();
            if n1 == 0 || n1 == n {
                return Err(Error::DegenerateArm { n1, n0: n - n1 });
            }
            Ok(t)
        }
        AssignmentPlan::Complete { .. } => {
            let n1 = plan.treated_count(n)?;
            // Partial Fisher-Yates: the first n1 slots of `order` become the
            // treated units.
            let mut order: Vec<usize> = (0..n).collect();
            for i in 0..n1 {
                let j = rng.gen_range(i..n);
                order.swap(i, j);
            }
            let mut t = vec![false; n];
            for &i in &order[..n1] {
                t[i] = true;
            }
            Ok(t)
        }
    }
}
