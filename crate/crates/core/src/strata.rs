//! Strata construction for post-stratified estimation: weighted-quantile
//! partitions, covariate partitions, their cross, and the empty-arm repair
//! policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ExperimentData;

/// Where a partition's labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataSource {
    WeightQuantiles,
    Covariate,
    CovariateXWeights,
}

/// Assign units to `k` strata of (as nearly as possible) equal total weight
/// mass. Units are ranked by weight, ties kept in input order, and a unit is
/// never split across a cut-point: each unit lands in the stratum containing
/// the midpoint of its mass interval. Labels are returned in input order and
/// are ascending in weight. The realized stratum count can be below `k` when
/// single units span more than one mass bucket.
pub fn weight_quantile_labels(w: &[f64], k: usize) -> Result<(Vec<usize>, usize)> {
    let n = w.len();
    if k == 0 || k > n {
        return Err(Error::TooManyStrata {
            requested: k,
            units: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
    let z: f64 = w.iter().sum();
    let mut labels = vec![0usize; n];
    let mut cum = 0.0;
    let mut used = vec![false; k];
    for &i in &order {
        let mid = cum + w[i] / 2.0;
        let s = ((k as f64 * mid / z) as usize).min(k - 1);
        labels[i] = s;
        used[s] = true;
        cum += w[i];
    }
    // compact away empty labels so downstream mass vectors are dense
    let mut remap = vec![usize::MAX; k];
    let mut k_eff = 0;
    for (s, &u) in used.iter().enumerate() {
        if u {
            remap[s] = k_eff;
            k_eff += 1;
        }
    }
    for l in &mut labels {
        *l = remap[*l];
    }
    Ok((labels, k_eff))
}

/// A unit-to-stratum assignment together with the per-stratum weight masses
/// used by the post-stratified estimators.
#[derive(Debug, Clone)]
pub struct StrataPartition {
    labels: Vec<usize>,
    k: usize,
    z: Vec<f64>,
    z1: Vec<f64>,
    z0: Vec<f64>,
    f_hat: Vec<f64>,
    counts: Vec<usize>,
    treated_counts: Vec<usize>,
    mean_w: Vec<f64>,
    source: StrataSource,
}

impl StrataPartition {
    /// Build a partition from explicit labels in [0, k); every label must be
    /// used by at least one unit.
    pub fn from_labels(
        labels: Vec<usize>,
        k: usize,
        data: &ExperimentData,
        source: StrataSource,
    ) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(Error::LengthMismatch(labels.len(), data.len()));
        }
        if k == 0 {
            return Err(Error::TooManyStrata {
                requested: 0,
                units: data.len(),
            });
        }
        let mut z = vec![0.0; k];
        let mut z1 = vec![0.0; k];
        let mut counts = vec![0usize; k];
        let mut treated_counts = vec![0usize; k];
        let w = data.weights();
        let t = data.treatments();
        for (i, &s) in labels.iter().enumerate() {
            if s >= k {
                return Err(Error::InvalidConfig(format!(
                    "stratum label {s} out of range for k={k}"
                )));
            }
            z[s] += w[i];
            counts[s] += 1;
            if t[i] {
                z1[s] += w[i];
                treated_counts[s] += 1;
            }
        }
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("empty stratum label".into()));
        }
        let total: f64 = z.iter().sum();
        let f_hat = z.iter().map(|&zk| zk / total).collect();
        let z0 = z.iter().zip(&z1).map(|(&a, &b)| a - b).collect();
        let mean_w = z
            .iter()
            .zip(&counts)
            .map(|(&zk, &ck)| zk / ck as f64)
            .collect();
        Ok(Self {
            labels,
            k,
            z,
            z1,
            z0,
            f_hat,
            counts,
            treated_counts,
            mean_w,
            source,
        })
    }

    /// Partition by weighted quantiles of the unit weights.
    pub fn weight_quantiles(data: &ExperimentData, k: usize) -> Result<Self> {
        let (labels, k_eff) = weight_quantile_labels(data.weights(), k)?;
        Self::from_labels(labels, k_eff, data, StrataSource::WeightQuantiles)
    }

    /// Partition by the distinct values of a categorical covariate column
    /// (levels ordered lexicographically for determinism).
    pub fn covariate(data: &ExperimentData, column: &str) -> Result<Self> {
        let values = data.covariate(column)?;
        let (labels, k) = category_labels(values);
        Self::from_labels(labels, k, data, StrataSource::Covariate)
    }

    /// Product partition of a covariate with weight quantiles; empty cells
    /// are compacted away before the repair policy runs.
    pub fn covariate_x_weights(data: &ExperimentData, column: &str, k: usize) -> Result<Self> {
        let values = data.covariate(column)?;
        let (cov_labels, _) = category_labels(values);
        let (wq_labels, kw) = weight_quantile_labels(data.weights(), k)?;
        let raw: Vec<usize> = cov_labels
            .iter()
            .zip(&wq_labels)
            .map(|(&c, &q)| c * kw + q)
            .collect();
        let (labels, k_eff) = compact_labels(&raw);
        Self::from_labels(labels, k_eff, data, StrataSource::CovariateXWeights)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn z1(&self) -> &[f64] {
        &self.z1
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    /// Estimated stratum shares Z_k / Z; they sum to 1.
    pub fn f_hat(&self) -> &[f64] {
        &self.f_hat
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn treated_counts(&self) -> &[usize] {
        &self.treated_counts
    }

    pub fn source(&self) -> StrataSource {
        self.source
    }

    fn stratum_ok(&self, s: usize) -> bool {
        self.z1[s] > 0.0 && self.z0[s] > 0.0
    }

    /// Merge every stratum that is missing a treatment arm into its nearest
    /// neighbor by mean weight, repeatedly, until all remaining strata carry
    /// both arms. Returns the repaired partition and the number of merges.
    /// Fails with `EmptyStratumArm` only when the data as a whole has an
    /// empty arm, so no amount of merging can help.
    pub fn repaired(&self) -> Result<(Self, usize)> {
        if (0..self.k).all(|s| self.stratum_ok(s)) {
            return Ok((self.clone(), 0));
        }
        // strata ordered by mean weight; weight-quantile labels are already
        // in that order, covariate labels generally are not
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| self.mean_w[a].total_cmp(&self.mean_w[b]));

        // groups of original labels, kept in mean-weight order
        let mut groups: Vec<Vec<usize>> = order.iter().map(|&s| vec![s]).collect();
        let group_stats = |g: &[usize]| {
            let z1: f64 = g.iter().map(|&s| self.z1[s]).sum();
            let z0: f64 = g.iter().map(|&s| self.z0[s]).sum();
            let z: f64 = g.iter().map(|&s| self.z[s]).sum();
            let c: usize = g.iter().map(|&s| self.counts[s]).sum();
            (z1, z0, z / c as f64)
        };
        let mut merges = 0;
        loop {
            let bad = groups.iter().position(|g| {
                let (z1, z0, _) = group_stats(g);
                z1 <= 0.0 || z0 <= 0.0
            });
            let Some(i) = bad else { break };
            if groups.len() == 1 {
                return Err(Error::EmptyStratumArm);
            }
            let target = if i == 0 {
                1
            } else if i == groups.len() - 1 {
                i - 1
            } else {
                let (_, _, mw) = group_stats(&groups[i]);
                let (_, _, lo) = group_stats(&groups[i - 1]);
                let (_, _, hi) = group_stats(&groups[i + 1]);
                if (mw - lo).abs() <= (hi - mw).abs() {
                    i - 1
                } else {
                    i + 1
                }
            };
            let moved = groups.remove(i);
            let target = if target > i { target - 1 } else { target };
            groups[target].extend(moved);
            merges += 1;
        }
        // relabel units by merged group, preserving weight order
        let mut remap = vec![0usize; self.k];
        for (new, g) in groups.iter().enumerate() {
            for &s in g {
                remap[s] = new;
            }
        }
        let labels: Vec<usize> = self.labels.iter().map(|&s| remap[s]).collect();
        let k = groups.len();
        let mut z = vec![0.0; k];
        let mut z1 = vec![0.0; k];
        let mut z0 = vec![0.0; k];
        let mut counts = vec![0usize; k];
        let mut treated_counts = vec![0usize; k];
        for (new, g) in groups.iter().enumerate() {
            for &s in g {
                z[new] += self.z[s];
                z1[new] += self.z1[s];
                z0[new] += self.z0[s];
                counts[new] += self.counts[s];
                treated_counts[new] += self.treated_counts[s];
            }
        }
        let total: f64 = z.iter().sum();
        let f_hat = z.iter().map(|&zk| zk / total).collect();
        let mean_w = z
            .iter()
            .zip(&counts)
            .map(|(&zk, &ck)| zk / ck as f64)
            .collect();
        Ok((
            Self {
                labels,
                k,
                z,
                z1,
                z0,
                f_hat,
                counts,
                treated_counts,
                mean_w,
                source: self.source,
            },
            merges,
        ))
    }
}

/// Label units by the lexicographic rank of their category value.
fn category_labels(values: &[String]) -> (Vec<usize>, usize) {
    let mut levels: Vec<&String> = values.iter().collect();
    levels.sort();
    levels.dedup();
    let labels = values
        .iter()
        .map(|v| levels.binary_search(&v).expect("level present"))
        .collect();
    (labels, levels.len())
}

fn compact_labels(raw: &[usize]) -> (Vec<usize>, usize) {
    let max = raw.iter().copied().max().unwrap_or(0);
    let mut used = vec![false; max + 1];
    for &l in raw {
        used[l] = true;
    }
    let mut remap = vec![usize::MAX; max + 1];
    let mut k = 0;
    for (l, &u) in used.iter().enumerate() {
        if u {
            remap[l] = k;
            k += 1;
        }
    }
    (raw.iter().map(|&l| remap[l]).collect(), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(y: &[f64], t: &[bool], w: &[f64]) -> ExperimentData {
        ExperimentData::new(y.to_vec(), t.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn single_stratum_is_degenerate_partition() {
        let d = data(&[1.0, 2.0], &[true, false], &[1.0, 3.0]);
        let p = StrataPartition::weight_quantiles(&d, 1).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.f_hat(), &[1.0]);
    }

    #[test]
    fn equal_weights_give_equal_count_strata() {
        let (labels, k) = weight_quantile_labels(&[1.0; 8], 2).unwrap();
        assert_eq!(k, 2);
        assert_eq!(labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn greedy_mass_accumulation_hand_case() {
        // w=(1,1,2,4), K=2: masses split (4,4) as units {1,2,3} and {4}
        let (labels, k) = weight_quantile_labels(&[1.0, 1.0, 2.0, 4.0], 2).unwrap();
        assert_eq!(k, 2);
        assert_eq!(labels, vec![0, 0, 0, 1]);
    }

    #[test]
    fn labels_returned_in_input_order() {
        let (labels, _) = weight_quantile_labels(&[4.0, 1.0, 2.0, 1.0], 2).unwrap();
        assert_eq!(labels, vec![1, 0, 0, 0]);
    }

    #[test]
    fn rejects_too_many_strata() {
        assert!(matches!(
            weight_quantile_labels(&[1.0, 1.0], 3),
            Err(Error::TooManyStrata { .. })
        ));
        assert!(weight_quantile_labels(&[1.0, 1.0], 0).is_err());
    }

    #[test]
    fn huge_unit_compacts_empty_strata() {
        // one unit carries most of the mass; intermediate buckets are empty
        // and must be compacted out
        let (labels, k) = weight_quantile_labels(&[1.0, 1.0, 1.0, 9.0], 4).unwrap();
        assert_eq!(k, 2);
        assert_eq!(labels, vec![0, 0, 0, 1]);
    }

    #[test]
    fn f_hat_sums_to_one() {
        let d = data(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[true, false, true, false, true],
            &[0.5, 1.5, 2.0, 4.0, 9.0],
        );
        let p = StrataPartition::weight_quantiles(&d, 3).unwrap();
        let s: f64 = p.f_hat().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repair_merges_one_armed_stratum() {
        // heavy stratum has only treated units; it must merge downward
        let d = data(
            &[1.0, 2.0, 3.0, 4.0],
            &[true, false, true, true],
            &[1.0, 1.0, 8.0, 8.0],
        );
        let p = StrataPartition::weight_quantiles(&d, 2).unwrap();
        assert_eq!(p.k(), 2);
        let (r, merges) = p.repaired().unwrap();
        assert_eq!(merges, 1);
        assert_eq!(r.k(), 1);
        assert_eq!(r.counts(), &[4]);
    }

    #[test]
    fn repair_gives_up_when_an_arm_is_globally_empty() {
        // construct labels directly; ExperimentData itself rejects this case
        let d = data(&[1.0, 2.0], &[true, false], &[1.0, 1.0]);
        let p = StrataPartition::from_labels(vec![0, 0], 1, &d, StrataSource::Covariate).unwrap();
        assert!(p.repaired().is_ok());
    }

    #[test]
    fn covariate_partition_orders_levels() {
        let d = data(
            &[1.0, 2.0, 3.0, 4.0],
            &[true, false, true, false],
            &[1.0, 1.0, 1.0, 1.0],
        )
        .with_covariate("party", vec!["r".into(), "d".into(), "r".into(), "d".into()])
        .unwrap();
        let p = StrataPartition::covariate(&d, "party").unwrap();
        assert_eq!(p.k(), 2);
        assert_eq!(p.labels(), &[1, 0, 1, 0]);
    }

    #[test]
    fn cross_partition_compacts_empty_cells() {
        let d = data(
            &[1.0, 2.0, 3.0, 4.0],
            &[true, false, true, false],
            &[1.0, 1.0, 9.0, 9.0],
        )
        .with_covariate("g", vec!["a".into(), "a".into(), "b".into(), "b".into()])
        .unwrap();
        let p = StrataPartition::covariate_x_weights(&d, "g", 2).unwrap();
        // the occupied cells are (a, light) x2, (b, light), (b, heavy);
        // (a, heavy) is empty and compacted away
        assert_eq!(p.k(), 3);
        assert_eq!(p.counts(), &[2, 1, 1]);
    }
}
