//! Shared fixtures for the criterion benchmarks.

use svex_core::design::{substream_rng, weighted_sample_without_replacement, AssignmentPlan};
use svex_core::simulation::{generate_population, DgpConfig};
use svex_core::{ExperimentData, Population};

/// A default-DGP population and one realized experiment of size `n`.
pub fn fixture(n: usize) -> (Population, ExperimentData) {
    let cfg = DgpConfig::default();
    let mut rng = substream_rng(7, 0);
    let pop = generate_population(&cfg, &mut rng).expect("valid config");
    let draw = weighted_sample_without_replacement(&pop, n, &mut rng).expect("n <= N");
    let plan = AssignmentPlan::Bernoulli { p: 0.5 };
    let t = loop {
        match svex_core::design::assign_treatment(n, &plan, &mut rng) {
            Ok(t) => break t,
            Err(_) => continue,
        }
    };
    let pi_bar = pop.pi_bar();
    let w: Vec<f64> = draw.indices().iter().map(|&i| pi_bar / pop.pi()[i]).collect();
    let y: Vec<f64> = draw
        .indices()
        .iter()
        .zip(&t)
        .map(|(&i, &ti)| if ti { pop.y1()[i] } else { pop.y0()[i] })
        .collect();
    let data = ExperimentData::new(y, t, w).expect("valid draw");
    (pop, data)
}
