//! The equivalent-data-requirement metric in isolation: how much data does
//! a better estimator need to match a baseline's full-data score?
//!
//! Run with: `cargo run --release --example equivalent_data`

use factorlens::estimators::{fit_estimator, EstimatorKind, HyperParam};
use factorlens::likelihood::expected_loglik;
use factorlens::linalg::SampleStats;
use factorlens::metrics::{equivalent_data_requirement, EdrParams};
use factorlens::synth::{gen_uniform, SynthSpec};
use factorlens::Dataset;

fn main() -> factorlens::Result<()> {
    let spec = SynthSpec {
        m: 60,
        k_star: 5,
        sigma_f: 5.0,
        n: 72,
        sigma_r: 0.0,
        seed: 31,
    };
    let (data, truth) = gen_uniform(&spec)?;

    // Fixed hyperparameters keep the example focused on the sweep itself;
    // the study driver re-runs cross-validation per prefix instead.
    let baseline = (EstimatorKind::Urm, HyperParam::FactorCount(5));
    let challenger = (EstimatorKind::Utm, HyperParam::TracePenalty(60.0));

    let evaluator = |learner: &(EstimatorKind, HyperParam), subset: &Dataset| {
        let stats = SampleStats::from_dataset(subset);
        let est = fit_estimator(learner.0, &stats, &learner.1)?;
        Ok(expected_loglik(est.sigma(), &truth.sigma_star))
    };

    let outcome = equivalent_data_requirement(
        &baseline,
        &challenger,
        &data,
        &EdrParams::new(0.05)?,
        evaluator,
    )?;

    println!("baseline ({} {}) full-data score: {:.4}", baseline.0, baseline.1, outcome.baseline);
    println!("sweep of the challenger ({} {}):", challenger.0, challenger.1);
    for (gamma, score) in &outcome.trace {
        println!("  gamma={gamma:.2} -> {score:.4}");
    }
    println!(
        "equivalent data requirement: {:.1}% ({:?})",
        100.0 * outcome.gamma,
        outcome.status
    );
    Ok(())
}
