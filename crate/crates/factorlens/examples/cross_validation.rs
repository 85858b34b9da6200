//! Hyperparameter selection by single-holdout validation: fit a grid of
//! penalties on 70% of the data, score each on the held-out 30%, refit the
//! winner on everything.
//!
//! Run with: `cargo run --release --example cross_validation`

use factorlens::estimators::{urm_fit, utm_fit, UrmParams, UtmParams};
use factorlens::likelihood::expected_loglik;
use factorlens::select::{holdout_select, HoldoutPlan};
use factorlens::synth::{gen_uniform, SynthSpec};

fn main() -> factorlens::Result<()> {
    let spec = SynthSpec {
        m: 50,
        k_star: 4,
        sigma_f: 5.0,
        n: 80,
        sigma_r: 0.0,
        seed: 21,
    };
    let (data, truth) = gen_uniform(&spec)?;
    let plan = HoldoutPlan::new(99);

    // Factor-count selection for the rank-constrained estimator.
    let k_grid: Vec<usize> = (0..=10).collect();
    let sel = holdout_select(
        |stats, k: &usize| urm_fit(stats, &UrmParams { k: *k }),
        &k_grid,
        &data,
        &plan,
    )?;
    println!("rank-constrained: selected k={} (true {})", sel.param, spec.k_star);
    for (k, score) in k_grid.iter().zip(&sel.validation_scores) {
        println!("  k={k:<3} validation {score:.4}");
    }
    println!(
        "  out-of-sample with refit: {:.4}\n",
        expected_loglik(sel.estimate.sigma(), &truth.sigma_star)
    );

    // Penalty selection for the soft-thresholding estimator.
    let lambda_grid: Vec<f64> = (1..=10).map(|i| 10.0 * i as f64).collect();
    let sel = holdout_select(
        |stats, l: &f64| utm_fit(stats, &UtmParams { lambda: *l }).map(|s| s.estimate),
        &lambda_grid,
        &data,
        &plan,
    )?;
    println!("trace-penalized: selected lambda={}", sel.param);
    println!(
        "  out-of-sample with refit: {:.4}",
        expected_loglik(sel.estimate.sigma(), &truth.sigma_star)
    );
    Ok(())
}
