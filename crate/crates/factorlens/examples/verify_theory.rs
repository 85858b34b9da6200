//! Numerical verification at reduced scale: the reference solver against
//! the spectral solver, spiked-model bias measurements, and the closed-form
//! outlier-residual analyses.
//!
//! The `factorlens verify` command runs the full-size versions of these and
//! writes a JSON report; this example keeps the sizes small enough to watch.
//!
//! Run with: `cargo run --release --example verify_theory`

use factorlens::estimators::{utm_fit, UtmParams};
use factorlens::linalg::{sample_covariance, SampleStats};
use factorlens::oracles::{
    prop2_eigvector_ratio, prop2_matrix, prop3_idealized_tm, prop3_via_matrix,
    sdp_reference_solve, verify_prop1_trace, verify_theorem2, AdmmOptions, PenalizedForm,
    SpikedModel,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn main() -> factorlens::Result<()> {
    // Spectral solver versus the alternating-direction reference.
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let (m, n) = (8usize, 30usize);
    let x = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sam = sample_covariance(&factorlens::Dataset::new(x)?);
    let lambda = 4.0;
    let fast = utm_fit(&SampleStats::from_cov(sam.clone(), n)?, &UtmParams { lambda })?;
    let slow = sdp_reference_solve(
        PenalizedForm::UniformResidual,
        &sam,
        n,
        lambda,
        &AdmmOptions::default(),
    )?;
    let gap = (slow.sigma.matrix() - fast.estimate.sigma().matrix()).norm()
        / slow.sigma.matrix().norm();
    println!(
        "soft-thresholding vs reference solver: relative gap {gap:.2e} ({} iterations)",
        slow.iterations
    );

    // Spiked-model eigenvalue bias (reduced size).
    let model = SpikedModel::new(150, 300, 1.0, vec![10.0])?;
    let report = verify_theorem2(&model, 10, 42, 0.25)?;
    println!(
        "spike bias: mean offset {:.4} in bracket [{:.4}, {:.4}] -> {}",
        report.mean_offset,
        report.bracket.0,
        report.bracket.1,
        if report.pass { "pass" } else { "FAIL" }
    );
    println!(
        "spike location: observed {:.4}, predicted {:.4} ({:.2}% off)",
        report.top_eigenvalues.iter().sum::<f64>() / report.top_eigenvalues.len() as f64,
        report.predicted_spike,
        100.0 * report.spike_rel_error
    );

    // Trace concentration in high dimension.
    let model = SpikedModel::new(500, 10, 1.0, vec![10.0, 8.0, 6.0, 4.0, 2.0])?;
    let trace_report = verify_prop1_trace(&model, 50, 42, 0.1)?;
    println!(
        "trace ratio |ratio-1| >= 0.1 in {:.0}% of trials at M=500, N=10",
        100.0 * trace_report.deviation_frequency
    );

    // Closed-form outlier-residual analyses.
    let (q, ratio) = prop2_eigvector_ratio(2, 2.0)?;
    println!("one-outlier model, M=2 r=2: top eigenvalue {q:.6}, component ratio {ratio:.6}");
    let numeric = factorlens::eigh_desc(&prop2_matrix(2, 2.0));
    println!(
        "  numeric cross-check: {:.6} / {:.6}",
        numeric.values()[0],
        numeric.basis()[(0, 0)] / numeric.basis()[(1, 0)]
    );

    let analytic = prop3_idealized_tm(3, 2, 2.0, 4.0)?;
    let matrix = prop3_via_matrix(3, 2, 2.0, 4.0)?;
    println!(
        "idealized penalized fit, M=3 N=2 r=4 lambda=2: rank {} ratio {:.6} (matrix route {:.6})",
        analytic.rank,
        analytic.ratio.unwrap(),
        matrix.ratio.unwrap()
    );
    Ok(())
}
